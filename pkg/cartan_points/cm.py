from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

from mpmath import mp, mpc, mpf
from sympy import legendre_symbol

from .config import load_config
from .precision import BigReal
from .settings import CMEntry, CMTable, load_cm_table

log = logging.getLogger("cartan.cm")


def cm_table(config_dir: Optional[Path] = None) -> CMTable:
    return load_cm_table(config_dir or load_config().config_dir)


def cm_j_values(config_dir: Optional[Path] = None) -> frozenset[int]:
    return cm_table(config_dir).j_values()


def on_curve(entry: CMEntry, p: int) -> bool:
    """p inert in the CM field and prime to the conductor: (D/p) = -1."""
    r = entry.disc % p
    return r != 0 and legendre_symbol(r, p) == -1


def cm_points_on_curve(p: int, config_dir: Optional[Path] = None) -> list[CMEntry]:
    return [e for e in cm_table(config_dir).entries if on_curve(e, p)]


def cm_tau(disc: int) -> mpc:
    """(-b + √D)/2 with b ≡ D (mod 2), reduced in the fundamental domain."""
    if disc >= 0 or disc % 4 not in (0, 1):
        raise ValueError(f"{disc} is not a negative discriminant")
    b = disc % 2
    return mpc(-mpf(b) / 2, mp.sqrt(-disc) / 2)


def cm_q(disc: int) -> BigReal:
    """Real q = e^{2πiτ₀}: e^{-π√|D|}, negated for odd D."""
    v = mp.exp(-mp.pi * mp.sqrt(-disc))
    q = BigReal.rounded(v, 8)
    return -q if disc % 2 else q
