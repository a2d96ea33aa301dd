from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from mpmath import mp, mpf

from .cyclotomic import UnitSystem, log_embedding_matrix, verify_unit_system
from .errors import UnitBasisError, ValidationFailed
from .modp import GroupContext, unit_orbits
from .precision import BigReal, with_precision
from .relation import CuspFrame, UnitLogMatrix, bk_from_q
from .siegel import build_orbit_unit, cusp_series, product_identity_check

log = logging.getLogger("cartan.validation")


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    residual: str
    detail: str = ""


@dataclass
class ValidationSummary:
    p: int
    bits: int
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def add(self, name: str, ok: bool, residual: object = "", detail: str = "") -> CheckResult:
        value = mp.nstr(residual, 5) if isinstance(residual, mpf) else str(residual)
        result = CheckResult(name, bool(ok), value, detail)
        self.checks.append(result)
        level = logging.INFO if ok else logging.ERROR
        log.log(level, "check %s: %s (residual %s)%s", name, "ok" if ok else "FAILED", value, f" {detail}" if detail else "")
        return result

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.ok]

    def raise_for_failures(self) -> None:
        bad = self.failures()
        if bad:
            first = bad[0]
            raise ValidationFailed(first.name, first.residual)


def check_product_identity(
    summary: ValidationSummary, ctx: GroupContext, bits: int, samples: int, seed: int, tolerance: mpf
) -> None:
    with with_precision(bits):
        units = [build_orbit_unit(ctx, o) for o in unit_orbits(ctx)]
        check = product_identity_check(ctx, units, samples=samples, seed=seed, tolerance=tolerance)
    summary.add("product-identity", check.residual < tolerance, check.residual, f"{samples} samples at {bits} bits")
    summary.add("orbit-product", check.orbit_residual < tolerance, check.orbit_residual)


def check_unit_system(summary: ValidationSummary, units: UnitSystem) -> None:
    try:
        verify_unit_system(units)
    except UnitBasisError as exc:
        summary.add("unit-system", False, "", str(exc))
        return
    summary.add("unit-system", True, "", units.source)
    # column sums of the log matrix: log p for η₀, 0 for the units
    M = log_embedding_matrix(units)
    worst = mpf(0)
    for ell in range(units.d):
        total = sum((M[k][ell] for k in range(units.d)), BigReal(mpf(0)))
        expected = mp.log(units.p) if ell == 0 else mpf(0)
        worst = max(worst, abs(total.value - expected))
    summary.add("log-column-sums", worst < mp.ldexp(mpf(1), -(mp.prec // 2)), worst)


def check_orders(summary: ValidationSummary, ctx: GroupContext, nu: int = 0) -> None:
    """Σ_ℓ ord_c U^{σℓ} = 0, |ord_c| <= m·p(p+1)|H|/12, and the degree bound of U."""
    unit = build_orbit_unit(ctx, unit_orbits(ctx)[0])
    ord_bound = Fraction(ctx.m * ctx.p * (ctx.p + 1) * ctx.h_order, 12)
    degree_bound = Fraction(ctx.m * ctx.p * (ctx.p**2 - 1) * ctx.h_order, 48)
    sum_worst = Fraction(0)
    ord_worst = Fraction(0)
    degrees = [Fraction(0)] * ctx.d
    for c in range(1, (ctx.p - 1) // 2 + 1):
        ords = [cusp_series(ctx, unit, ell, c, nu).ord for ell in range(ctx.d)]
        sum_worst = max(sum_worst, abs(sum(ords, Fraction(0))))
        ord_worst = max(ord_worst, max(abs(o) for o in ords))
        for ell, o in enumerate(ords):
            degrees[ell] += max(o, Fraction(0))
    summary.add("ord-sum", sum_worst == 0, sum_worst)
    summary.add("ord-bound", ord_worst <= ord_bound, ord_worst, f"bound {ord_bound}")
    summary.add("degree-bound", max(degrees) <= degree_bound, max(degrees), f"bound {degree_bound}")


def check_matrix(summary: ValidationSummary, matrix: UnitLogMatrix) -> None:
    limit = mp.ldexp(mpf(1), -(matrix.bits // 2))
    summary.add("inverse-residual", matrix.residual < limit, matrix.residual)


def check_reconstruction(
    summary: ValidationSummary, matrix: UnitLogMatrix, m: int, vectors: int = 100, seed: int = 0, spread: int = 1000
) -> None:
    """Random integer exponent vectors b (b₀ = m) survive b -> M·b -> α·(M·b)."""
    rng = random.Random(seed)
    misses = 0
    worst = mpf(0)
    for _ in range(vectors):
        b = [m] + [rng.randint(-spread, spread) for _ in range(matrix.d - 1)]
        image = matrix.apply([BigReal.exact(x) for x in b])
        back = matrix.solve(image)
        for x, y in zip(b, back):
            worst = max(worst, abs(y.value - x))
            if not y.contains(x) or y.err >= mpf(1) / 2:
                misses += 1
    summary.add("reconstruction", misses == 0, worst, f"{vectors} vectors, {misses} misses")


def check_frames(summary: ValidationSummary, frames: Sequence[CuspFrame], tolerance: mpf) -> None:
    worst = max(abs(f.delta[0]).hi for f in frames)
    summary.add("delta0-vanishes", worst < tolerance, worst)


def check_cross_modes(summary: ValidationSummary, frames: Sequence[CuspFrame], points: int = 50) -> None:
    """bk_from_q agrees across its modes at |q| = 2^{-p-2} and a spread of smaller |q|."""
    bad = 0
    tried = 0
    for frame in frames:
        with with_precision(frame.bits):
            base = mp.ldexp(mpf(1), -frame.p - 2)
            for n in range(points):
                sign = 1 if n % 2 == 0 else -1
                q = BigReal.rounded(sign * base / (1 + n // 2))
                modes = [bk_from_q(frame, q, mode) for mode in ("small-q", "truncated", "full-log")]
                tried += 1
                for k in range(frame.d):
                    vals = [m[k] for m in modes]
                    if max(v.lo for v in vals) > min(v.hi for v in vals):
                        bad += 1
                        break
    summary.add("cross-mode", bad == 0, bad, f"{tried} points")


def validate_precomputation(
    ctx: GroupContext,
    units: UnitSystem,
    matrix: UnitLogMatrix,
    frames: Sequence[CuspFrame],
    validation_bits: int,
    samples: int = 10,
    seed: int = 0,
    tolerance: mpf = mpf(10) ** -20,
    cross_mode_points: int = 50,
    reconstruction_vectors: int = 100,
    frame_bits: Optional[int] = None,
) -> ValidationSummary:
    bits = frame_bits or matrix.bits
    summary = ValidationSummary(ctx.p, bits)
    check_product_identity(summary, ctx, validation_bits, samples, seed, tolerance)
    with with_precision(bits):
        check_unit_system(summary, units)
        check_orders(summary, ctx)
        check_matrix(summary, matrix)
        check_reconstruction(summary, matrix, ctx.m, reconstruction_vectors, seed)
        check_frames(summary, frames, tolerance)
    check_cross_modes(summary, frames, cross_mode_points)
    log.info("validation p=%d: %d checks, %d failed", ctx.p, len(summary.checks), len(summary.failures()))
    return summary
