from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from mpmath import mp, mpf

from .cyclotomic import UnitSystem
from .errors import PrecisionExhausted, ReductionStalled
from .modp import GroupContext
from .precision import BigReal, big_max, continued_fraction_expand, nearest_integer_distance
from .relation import CuspFrame

log = logging.getLogger("cartan.bounds")

STALL_FACTOR = 10**6
MAX_ROUNDS = 8


def matveev_C(n: int) -> BigReal:
    """40000·30^n·n^{5.5}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return BigReal.exact(40000 * 30**n * n**5) * BigReal.exact(n).sqrt()


@dataclass(frozen=True)
class ReductionStep:
    T: int
    r: int
    r_delta: BigReal
    r_lambda: BigReal
    Xi: BigReal
    B: BigReal


@dataclass(frozen=True)
class ReductionChain:
    pivot: int
    companion: int
    steps: tuple[ReductionStep, ...]
    Xi_hat: BigReal
    clamp: BigReal
    stalled: bool = False


@dataclass
class BoundLedger:
    cusp: int
    mho1: BigReal
    mho2: BigReal
    B0: BigReal
    matveev: BigReal
    reduction: Optional[ReductionChain] = None
    Upsilon: Optional[BigReal] = None
    companion_spread: Optional[mpf] = None
    notes: list[str] = field(default_factory=list)

    @property
    def steps(self) -> tuple[ReductionStep, ...]:
        return self.reduction.steps if self.reduction else ()

    @property
    def Xi_hat(self) -> Optional[BigReal]:
        return self.reduction.Xi_hat if self.reduction else None


def baker_B0(ctx: GroupContext, units: UnitSystem, frame: CuspFrame) -> BoundLedger:
    """Closed-form Baker bound B₀ for max_k |b_k| at the cusp of ``frame``."""
    d, p = ctx.d, ctx.p
    if d < 3:
        raise ValueError("the Baker bound needs d >= 3")
    heights = BigReal.exact(1)
    for h in units.heights():
        heights = heights * h
    mho1 = (
        BigReal.exact(10**8 * 9**d * d**6 * p ** (4 * d + 2))
        * frame.delta_max
        * heights
    )
    mho2 = mho1 + frame.theta_max + frame.kappa * (4 * p**3)
    B0 = mho1 * mho1.log() * 2 + mho2 * 2
    log.info(
        "cusp %d: mho1=%s B0=%s", frame.cusp, mp.nstr(mho1.value, 8), mp.nstr(B0.value, 8)
    )
    return BoundLedger(
        cusp=frame.cusp, mho1=mho1, mho2=mho2, B0=B0, matveev=matveev_C(d)
    )


def reduction_bits(B: BigReal, T0: int) -> int:
    return 64 + 2 * int(mp.ceil(mp.log(T0 * B.hi**2, 2)))


def clamp_value(frame: CuspFrame) -> BigReal:
    """max(p·log Θ, p·log 2)."""
    p = frame.p
    return big_max([frame.Theta.log() * p, BigReal.exact(2).log() * p])


def default_companion(frame: CuspFrame) -> int:
    others = [k for k in range(1, frame.d) if k != frame.pivot]
    decided = [k for k in others if frame.delta[k].is_decided()]
    pool = decided or others
    return max(pool, key=lambda k: abs(frame.delta[k].value))


def _find_r(delta: BigReal, TB: int) -> tuple[int, BigReal]:
    cf = continued_fraction_expand(delta, TB)
    _, r = cf.last()
    r_delta = nearest_integer_distance(delta * r)
    if r_delta.hi > mpf(1) / TB:
        raise PrecisionExhausted(f"‖rδ‖ not certified below 1/(TB) for r={r}", bits=mp.prec)
    return r, r_delta


def davenport_reduce(
    frame: CuspFrame,
    B_current: BigReal,
    T0: int = 10,
    companion: Optional[int] = None,
    max_rounds: int = MAX_ROUNDS,
    fallback: bool = True,
) -> ReductionChain:
    """Iterated Baker–Davenport reduction on the pivot and a companion index.

    A stall before the first step falls back to the Ξ implied by ``B_current``
    unless ``fallback`` is off, in which case it raises ReductionStalled.
    """
    k1 = frame.pivot
    k2 = default_companion(frame) if companion is None else companion
    if k2 in (0, k1):
        raise ValueError(f"companion must differ from 0 and the pivot {k1}")
    d1, d2 = frame.delta[k1], frame.delta[k2]
    t1, t2 = frame.theta[k1], frame.theta[k2]
    delta = d2 / d1
    lam = (d2 * t1 - d1 * t2) / d1
    scale = (abs(delta) + 1) * frame.Theta * BigReal.exact(Fraction(16, 5))
    clamp = clamp_value(frame)

    steps: list[ReductionStep] = []
    B = B_current
    best: Optional[BigReal] = None
    stalled = False
    for _ in range(max_rounds):
        T = T0
        while True:
            TB = int(mp.floor(T * B.hi))
            r, r_delta = _find_r(delta, TB)
            r_lambda = nearest_integer_distance(lam * r)
            if r_lambda.lo >= mpf(2) / T:
                break
            log.debug("cusp %d: T=%d gives ‖rλ‖=%s, retrying", frame.cusp, T, mp.nstr(r_lambda.value, 5))
            T *= 10
            if T > STALL_FACTOR * T0:
                if not steps and not fallback:
                    raise ReductionStalled(
                        f"cusp {frame.cusp}: no usable r up to T={T // 10} (companion {k2})"
                    )
                stalled = True
                break
        if stalled:
            log.warning("cusp %d: reduction stalled after %d steps", frame.cusp, len(steps))
            break
        gap = BigReal(r_lambda.lo - mpf(1) / T)
        Xi = (scale * BigReal.exact(T) * B / gap).log() * frame.p
        Xi = BigReal(Xi.hi)
        if best is not None and not Xi.definitely_less(best):
            break
        next_B = abs(d1) * big_max([Xi, clamp]) + abs(t1) + BigReal.exact(Fraction(16, 5))
        next_B = BigReal(next_B.hi)
        steps.append(ReductionStep(T, r, r_delta, r_lambda, Xi, B))
        log.info(
            "cusp %d: step %d T=%d r≈10^%s Xi=%s",
            frame.cusp, len(steps), T, mp.nstr(mp.log10(r), 4), mp.nstr(Xi.value, 10),
        )
        best = Xi
        B = next_B

    if best is None and stalled:
        # |δ₁|·log|q⁻¹| <= |b₁| + |ϑ₁| + 16/5 <= B + |ϑ₁| + 16/5
        best = BigReal(((B_current + abs(t1) + BigReal.exact(Fraction(16, 5))) / abs(d1)).hi)
    Xi_hat = big_max([best, clamp]) if best is not None else clamp
    Xi_hat = BigReal(Xi_hat.hi)
    return ReductionChain(k1, k2, tuple(steps), Xi_hat, clamp, stalled)


def companion_spread(frame: CuspFrame, B0: BigReal, T0: int = 10) -> Optional[mpf]:
    """Relative spread (max - min)/min of Ξ̂ over all usable companion indices."""
    values = []
    for k in range(1, frame.d):
        if k == frame.pivot or not frame.delta[k].is_decided():
            continue
        try:
            values.append(davenport_reduce(frame, B0, T0, companion=k, fallback=False).Xi_hat.value)
        except ReductionStalled:
            log.debug("cusp %d: companion %d stalls", frame.cusp, k)
    if len(values) < 2:
        return None
    return (max(values) - min(values)) / min(values)
