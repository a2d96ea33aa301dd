from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional

from sympy import legendre_symbol, primerange

log = logging.getLogger("cartan.frobenius")

EXCLUDED = "excluded"
UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class SmallJResult:
    j: int
    status: str
    ell: Optional[int] = None
    trace: Optional[int] = None


@lru_cache(maxsize=256)
def _quadratic_character(ell: int) -> tuple[int, ...]:
    return tuple([0] + [int(legendre_symbol(v, ell)) for v in range(1, ell)])


def weierstrass_model(j: int) -> tuple[int, int]:
    """(A, B) of y² = x³ + Ax + B with invariant j: A = 3j(1728-j), B = 2j(1728-j)²."""
    if j in (0, 1728):
        raise ValueError("the j-parametrized model degenerates at j = 0 and 1728")
    k = 1728 - j
    return 3 * j * k, 2 * j * k * k


def frobenius_trace(A: int, B: int, ell: int) -> int:
    """a_ℓ = -Σ_x χ(x³ + Ax + B) for a prime ℓ >= 5 of good reduction."""
    chi = _quadratic_character(ell)
    a, b = A % ell, B % ell
    return -sum(chi[(x * x * x + a * x + b) % ell] for x in range(ell))


def incompatible_with_normalizer(trace: int, ell: int, p: int) -> bool:
    """True when a_ℓ ≢ 0 and a_ℓ² - 4ℓ is a nonzero square mod p."""
    if trace % p == 0:
        return False
    disc = (trace * trace - 4 * ell) % p
    return disc != 0 and legendre_symbol(disc, p) == 1


def small_j_filter(p: int, j: int, ell_budget: int = 500) -> SmallJResult:
    A, B = weierstrass_model(j)
    bad = 2 * 3 * j * (1728 - j)
    for ell in primerange(5, ell_budget + 1):
        if ell == p or bad % ell == 0:
            continue
        trace = frobenius_trace(A, B, ell)
        if incompatible_with_normalizer(trace, ell, p):
            return SmallJResult(j, EXCLUDED, int(ell), trace)
    log.warning("j=%d not excluded for p=%d with primes up to %d", j, p, ell_budget)
    return SmallJResult(j, UNDETERMINED)


def screen_small_j(p: int, ell_budget: int = 500, values: Optional[Iterable[int]] = None) -> list[SmallJResult]:
    """small_j_filter over j = 1, …, 1727 (or ``values``)."""
    js = range(1, 1728) if values is None else values
    results = [small_j_filter(p, j, ell_budget) for j in js]
    undetermined = sum(r.status == UNDETERMINED for r in results)
    log.info("small-j screen p=%d: %d values, %d undetermined", p, len(results), undetermined)
    return results
