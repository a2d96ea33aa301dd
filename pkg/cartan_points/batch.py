from __future__ import annotations

import argparse
import logging
import time
from pathlib import Path
from typing import Any, Optional

import pandas as pd
from mpmath import mp

from .cli import emit
from .config import AppConfig, load_config, resolve_run_config, with_overrides
from .errors import CartanError
from .logging_setup import init_logging
from .paths import checkpoint_path, report_path, run_dir
from .pipeline import RunReport, run_pipeline

log = logging.getLogger("cartan.batch")

COLUMNS = [
    "p",
    "subgroup",
    "d",
    "m",
    "B0_log10",
    "Xi_hat",
    "Upsilon",
    "candidates",
    "integral_j",
    "status",
    "runtime_s",
    "notes",
]


def parse_lines(text: str) -> list[tuple[int, Optional[str]]]:
    entries = []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            p = int(parts[0])
        except ValueError as exc:
            raise ValueError(f"line {n}: {raw!r} does not start with a prime") from exc
        entries.append((p, parts[1] if len(parts) > 1 else None))
    return entries


def summary_row(report: RunReport, runtime: float) -> dict[str, Any]:
    ledgers = [c.ledger for c in report.cusps]
    b0 = max((mp.log10(x.B0.hi) for x in ledgers), default=None)
    xi = max((x.Xi_hat.hi for x in ledgers if x.Xi_hat is not None), default=None)
    ups = max((x.Upsilon.hi for x in ledgers if x.Upsilon is not None), default=None)
    return {
        "p": report.group["p"],
        "subgroup": report.group["subgroup"],
        "d": report.group["d"],
        "m": report.group["m"],
        "B0_log10": float(b0) if b0 is not None else None,
        "Xi_hat": float(xi) if xi is not None else None,
        "Upsilon": float(ups) if ups is not None else None,
        "candidates": len(report.candidates),
        "integral_j": ",".join(str(j) for j in report.j_list()),
        "status": report.status,
        "runtime_s": round(runtime, 1),
        "notes": "",
    }


def run_entry(p: int, subgroup: Optional[str], app: AppConfig, workers: Optional[int]) -> dict[str, Any]:
    start = time.perf_counter()
    try:
        cfg = resolve_run_config(p, {"subgroup": subgroup, "workers": workers}, app)
        root = run_dir(app.output_root, cfg.p, cfg.subgroup)
        cfg = with_overrides(cfg, checkpoint_path=checkpoint_path(root), report_path=report_path(root))
        report = run_pipeline(cfg, app)
        emit(report, cfg, app)
    except CartanError as e:
        log.exception("p=%d failed", p)
        row = {col: None for col in COLUMNS}
        row.update(p=p, subgroup=subgroup or "pm1", status="error", notes=f"error: {e}")
        row["runtime_s"] = round(time.perf_counter() - start, 1)
        return row
    return summary_row(report, time.perf_counter() - start)


def write_table(rows: list[dict[str, Any]], out_path: Path) -> Path:
    df = pd.DataFrame(rows, columns=COLUMNS)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if out_path.suffix.lower() == ".csv":
        df.to_csv(out_path, index=False)
    else:
        df.to_excel(out_path, index=False)
    return out_path


def main() -> None:
    parser = argparse.ArgumentParser(description="Run the pipeline for every prime listed in a file")
    parser.add_argument("input_file", type=Path, help="Text file with lines 'p [subgroup]'")
    parser.add_argument("--summary", type=Path, default=Path("batch_summary.xlsx"), help="Output table (.xlsx or .csv)")
    parser.add_argument("--workers", type=int, default=None, help="Processes for the slow phase")
    args = parser.parse_args()

    app = load_config()
    init_logging(app.log_level)
    entries = parse_lines(args.input_file.read_text(encoding="utf-8"))
    rows = [run_entry(p, subgroup, app, args.workers) for p, subgroup in entries]
    out = write_table(rows, args.summary)
    print(f"written: {out} | runs: {len(rows)} | failed: {sum(r['status'] == 'error' for r in rows)}")


if __name__ == "__main__":
    main()
