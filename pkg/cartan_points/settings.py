from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any

import yaml


@dataclass
class Defaults:
    run: dict[str, Any]
    validation: dict[str, Any]
    slow: dict[str, Any]

    def get(self, section: str, key: str, fallback: Any = None) -> Any:
        return getattr(self, section).get(key, fallback)


@lru_cache(maxsize=1)
def load_defaults(config_dir: Path) -> Defaults:
    p = config_dir / "defaults.yaml"
    data = yaml.safe_load(p.read_text(encoding="utf-8")) if p.exists() else {}
    return Defaults(
        run=data.get("run", {}) or {},
        validation=data.get("validation", {}) or {},
        slow=data.get("slow", {}) or {},
    )


@dataclass(frozen=True)
class CMEntry:
    disc: int
    j: int
    factored: str


@dataclass
class CMTable:
    entries: tuple[CMEntry, ...]

    def j_values(self) -> frozenset[int]:
        return frozenset(e.j for e in self.entries)

    def by_j(self, j: int) -> CMEntry | None:
        for e in self.entries:
            if e.j == j:
                return e
        return None


@lru_cache(maxsize=1)
def load_cm_table(config_dir: Path) -> CMTable:
    cfg_path = config_dir / "cm_invariants.yaml"
    data = yaml.safe_load(cfg_path.read_text(encoding="utf-8"))
    entries = tuple(
        CMEntry(disc=int(e["disc"]), j=int(e["j"]), factored=str(e.get("factored", "")))
        for e in data.get("cm", [])
    )
    return CMTable(entries=entries)
