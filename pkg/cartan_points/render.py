from __future__ import annotations

from pathlib import Path
from typing import Any

from jinja2 import Environment, FileSystemLoader, select_autoescape

SUMMARY_TEMPLATE = "report.md.j2"


def render_summary(templates_dir: Path, report: dict[str, Any]) -> str:
    env = Environment(
        loader=FileSystemLoader(str(templates_dir)),
        autoescape=select_autoescape([]),
        trim_blocks=True,
        lstrip_blocks=True,
    )
    template = env.get_template(SUMMARY_TEMPLATE)
    data = {**report}
    data.setdefault("candidates", [])
    data.setdefault("small_j", None)
    data.setdefault("injections", [])
    data.setdefault("cusps", [])
    data.setdefault("timings", {})
    content = template.render(**data)
    # collapse the blank runs left by empty sections
    lines = content.splitlines()
    out: list[str] = []
    for ln in lines:
        if not ln.strip() and out and not out[-1].strip():
            continue
        out.append(ln.rstrip())
    return "\n".join(out).strip() + "\n"


def write_summary(templates_dir: Path, report: dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_summary(templates_dir, report), encoding="utf-8")
    return path
