from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import AppConfig, RunConfig, load_config, resolve_run_config, with_overrides
from .errors import CartanError, ValidationFailed
from .logging_setup import attach_run_log, detach_run_log, init_logging
from .paths import checkpoint_path, log_path, report_path, run_dir, summary_path
from .persist import write_report
from .pipeline import RunReport, run_pipeline
from .render import write_summary

log = logging.getLogger("cartan.cli")

EXIT_OK = 0
EXIT_ERROR = 2
EXIT_VALIDATION = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Enumerate integral points on X_ns+(p)")
    parser.add_argument("--p", type=int, required=True, help="Prime level p >= 7")
    parser.add_argument("--subgroup", default=None, help="Generator of H in F_p^x, or 'pm1' (default)")
    parser.add_argument("--bits", type=int, default=None, help="Working precision in bits")
    parser.add_argument("--epsilon", type=float, default=None, help="Target truncation error for the slow phase")
    parser.add_argument("--t0", type=int, default=None, help="Initial T of the reduction")
    parser.add_argument("--ell-budget", type=int, default=None, help="Largest prime tried by the small-j filter")
    parser.add_argument("--index", type=int, default=None, help="Exponent denominator I: exponents lie in (1/I)Z")
    parser.add_argument("--workers", type=int, default=None, help="Processes for the slow phase")
    parser.add_argument("--checkpoint", type=Path, default=None, help="Checkpoint file (resumed when present)")
    parser.add_argument("--report", type=Path, default=None, help="JSON report path")
    parser.add_argument("--unit-basis", type=Path, default=None, help="Override file with a unit basis")
    parser.add_argument("--validate-only", action="store_true", help="Run the identity suite and exit")
    return parser


def config_from_args(args: argparse.Namespace, app: AppConfig) -> RunConfig:
    overrides = {
        "subgroup": args.subgroup,
        "bits": args.bits,
        "epsilon": args.epsilon,
        "t0": args.t0,
        "ell_budget": args.ell_budget,
        "index": args.index,
        "workers": args.workers,
        "checkpoint_path": args.checkpoint,
        "report_path": args.report,
        "unit_basis_path": args.unit_basis,
        "validate_only": args.validate_only or None,
    }
    cfg = resolve_run_config(args.p, overrides, app)
    root = run_dir(app.output_root, cfg.p, cfg.subgroup)
    changes = {}
    if cfg.checkpoint_path is None and not cfg.validate_only:
        changes["checkpoint_path"] = checkpoint_path(root)
    if cfg.report_path is None:
        changes["report_path"] = report_path(root)
    if changes:
        cfg = with_overrides(cfg, **changes)
    return cfg


def emit(report: RunReport, cfg: RunConfig, app: AppConfig) -> Path:
    data = report.as_dict()
    out = write_report(cfg.report_path, data)
    md = write_summary(app.templates_dir, data, summary_path(out.parent))
    log.info("report written to %s (summary %s)", out, md)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    app = load_config()
    init_logging(app.log_level)
    args = build_parser().parse_args(argv)
    handler = None
    try:
        cfg = config_from_args(args, app)
        handler = attach_run_log(log_path(cfg.report_path.parent))
        report = run_pipeline(cfg, app)
        emit(report, cfg, app)
    except ValidationFailed:
        log.exception("validation failed; enumeration not started")
        return EXIT_VALIDATION
    except CartanError:
        log.exception("run aborted")
        return EXIT_ERROR
    finally:
        if handler is not None:
            detach_run_log(handler)
    print(f"p={cfg.p} status={report.status} integral j: {report.j_list()}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
