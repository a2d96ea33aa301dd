from __future__ import annotations

from pathlib import Path


def run_dir(output_root: Path, p: int, subgroup: str) -> Path:
    target = output_root / f"p{p}_{subgroup}"
    target.mkdir(parents=True, exist_ok=True)
    return target


def report_path(run_root: Path) -> Path:
    return run_root / "report.json"


def checkpoint_path(run_root: Path) -> Path:
    return run_root / "progress.cpt"


def summary_path(run_root: Path) -> Path:
    return run_root / "summary.md"


def log_path(run_root: Path) -> Path:
    return run_root / "run.log"
