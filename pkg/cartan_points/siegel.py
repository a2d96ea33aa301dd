from __future__ import annotations

import logging
import random
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional

from mpmath import mp, mpc, mpf

from .cyclotomic import CycloElement, embed, one_minus_zeta
from .jfunction import region_radius
from .modp import GroupContext, Orbit, Point, act_right, galois_matrix, lift, nonzero_points, reduce_matrix, sigma_c
from .precision import BigComplex, BigReal, ulp

log = logging.getLogger("cartan.siegel")

Q_MAX = mpf("0.0044")
MODES = ("log", "nolog", "only-log")
UNIT_MODES = ("full-log", "truncated", "small-q")


def ell_of(a1: Fraction) -> Fraction:
    """B₂(a₁ - ⌊a₁⌋)/2 with B₂(T) = T² - T + 1/6."""
    x = a1 - (a1.numerator // a1.denominator)
    return (x * x - x + Fraction(1, 6)) / 2


@dataclass(frozen=True)
class SiegelTerm:
    p: int
    a: Point
    tilde_a: tuple[Fraction, Fraction]
    ell: Fraction

    @property
    def exponent(self) -> int:
        """p·ã₁, the power of t = q^{1/p} in q^{ã₁}."""
        return int(self.tilde_a[0] * self.p)

    @property
    def angle(self) -> int:
        return self.a[1] % self.p

    @property
    def gamma_root(self) -> Fraction:
        """x with the root-of-unity part of γ_a equal to e^{πix}."""
        t1, t2 = self.tilde_a
        return t2 * (t1 - 1)

    @property
    def gamma_factor(self) -> Optional[CycloElement]:
        if self.exponent:
            return None
        return one_minus_zeta(self.p, self.angle)

    def log_abs_gamma(self) -> BigReal:
        if self.exponent:
            return BigReal(mpf(0))
        # |1 - e^{2πiã₂}| = 2|sin(πã₂)|
        t2 = self.tilde_a[1]
        v = mp.log(2 * abs(mp.sinpi(mpf(t2.numerator) / t2.denominator)))
        return BigReal(v, 4 * ulp(mpf(1)) + 2 * ulp(v))

    def retained(self) -> Optional[tuple[int, int]]:
        """(e, s) of the factor 1 - ζ^s t^e kept as a logarithm, None when ã₁ = 0."""
        A = self.exponent
        if A == 0:
            return None
        if 2 * A < self.p:
            return A, self.angle
        return self.p - A, (-self.angle) % self.p

    def factors(self, max_exponent: int) -> Iterator[tuple[int, int]]:
        """(e, s) for the product factors 1 - ζ^s t^e with 1 <= e <= max_exponent."""
        p, A, s = self.p, self.exponent, self.angle
        n = 0
        while p * n - A <= max_exponent:
            e1 = p * n + A
            if e1 and e1 <= max_exponent:
                yield e1, s
            e2 = p * (n + 1) - A
            if e2 <= max_exponent:
                yield e2, (-s) % p
            n += 1

    def conjugate(self) -> SiegelTerm:
        return make_term((self.a[0], -self.a[1]), self.p)


def make_term(a: Point, p: int, shift: int = 0) -> SiegelTerm:
    lifted = lift(a, p, shift)
    return SiegelTerm(p, lifted.a, lifted.tilde, ell_of(lifted.tilde[0]))


def beta_coefficients(term: SiegelTerm, nu: int, primed: bool = False) -> list[CycloElement]:
    """β_1..β_ν of log(g_a/(γ_a q^{ℓ_a})) as a series in t = q^{1/p}.

    With ``primed`` the retained factor is left out (it is kept as a logarithm).
    """
    if nu < 1:
        raise ValueError("nu must be >= 1")
    p = term.p
    skip = term.retained() if primed else None
    acc = [[Fraction(0)] * p for _ in range(nu)]
    skipped = False
    for e, s in term.factors(nu):
        if skip is not None and not skipped and (e, s) == skip:
            skipped = True
            continue
        j = 1
        while e * j <= nu:
            acc[e * j - 1][s * j % p] -= Fraction(1, j)
            j += 1
    return [CycloElement.from_full(p, row) for row in acc]


def _default_terms(abs_t: mpf, p: int) -> int:
    rate = -mp.log(abs_t) * p
    return int(mp.ceil(mp.prec * mp.log(2) / rate)) + 2


def _t_err(t: BigComplex) -> mpf:
    return t.re.err + t.im.err


def _zeta(s: int, p: int) -> mpc:
    return mp.expjpi(mpf(2 * s) / p)


def _check_q(abs_t: mpf, p: int, limit: mpf = Q_MAX) -> None:
    q = BigReal(abs_t) ** p
    if q.hi > limit:
        raise ValueError(f"|q| = {mp.nstr(q.hi, 6)} outside the expansion region")


def siegel_direct(term: SiegelTerm, t: BigComplex, n_terms: Optional[int] = None) -> BigComplex:
    """Truncated product ∏(1 - q^{n+ã₁}e^{2πiã₂})(1 - q^{n+1-ã₁}e^{-2πiã₂}) at q = t^p.

    This is g_a/(-γ_a q^{ℓ_a}); the constant factor 1 - e^{2πiã₂} for ã₁ = 0 sits in γ_a.
    """
    p = term.p
    tv = t.to_mpc()
    r = abs(tv) + _t_err(t)
    _check_q(r, p)
    N = n_terms if n_terms is not None else _default_terms(r, p)
    prod = mpc(1)
    dlog = mpf(0)
    count = 0
    for e, s in term.factors(p * N + p):
        if e > p * (N + 1):
            continue
        z = tv ** e * _zeta(s, p)
        prod *= 1 - z
        az = abs(z)
        dlog += e * az / (1 - az)
        count += 1
    abs_q = r ** p
    tail_log = 4 * abs_q ** (N + 1) / (1 - abs_q)
    mag = abs(prod)
    err = mag * mp.expm1(tail_log)
    err += mag * (count * (p * N + 8)) * ulp(mpf(1)) * 4
    if _t_err(t):
        err += 2 * mag * dlog / max(abs(tv), ulp(mpf(1))) * _t_err(t)
    err *= mpf("1.01")
    return BigComplex(BigReal(prod.real, err), BigReal(prod.imag, err))


def siegel_value(term: SiegelTerm, tau: mpc, n_terms: Optional[int] = None) -> BigComplex:
    """g_ã(τ) = -q^{ℓ_a} γ_a ∏(…)."""
    p = term.p
    tau = mpc(tau)
    t = mp.expjpi(2 * tau / p)
    inner = siegel_direct(term, BigComplex.from_mpc(t), n_terms)
    q_ell = mp.expjpi(2 * tau * (mpf(term.ell.numerator) / term.ell.denominator))
    gx = term.gamma_root
    gamma = mp.expjpi(mpf(gx.numerator) / gx.denominator)
    if term.exponent == 0:
        t2 = term.tilde_a[1]
        gamma *= 1 - mp.expjpi(2 * mpf(t2.numerator) / t2.denominator)
    front = -q_ell * gamma
    value = front * inner.to_mpc()
    err = abs(front) * (inner.err + 16 * ulp(abs(inner.to_mpc())))
    return BigComplex(BigReal(value.real, err), BigReal(value.imag, err))


def _series_sum(coeffs: list[CycloElement], tv: mpc) -> tuple[mpc, mpf, mpf]:
    """Σ β_k t^k with a rounding bound and a bound for |d/dt|."""
    total = mpc(0)
    weight = mpf(0)
    deriv = mpf(0)
    power = mpc(1)
    at = abs(tv)
    for k, beta in enumerate(coeffs, start=1):
        power *= tv
        b = embed(beta, 1)
        total += b.to_mpc() * power
        bb = b.abs_upper()
        weight += bb * at ** k + b.err * at ** k
        deriv += k * bb * at ** (k - 1)
    return total, weight, deriv


def siegel_series(term: SiegelTerm, t: BigComplex, nu: int, mode: str = "log") -> BigComplex:
    """log of :func:`siegel_direct` from the asymptotic expansions.

    Modes: ``log`` (retained logarithm + Σβ′_k t^k), ``nolog`` (Σβ_k t^k,
    needs |q| <= 2^{-p}) and ``only-log`` (retained logarithm alone).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    p = term.p
    tv = t.to_mpc()
    r = abs(tv) + _t_err(t)
    _check_q(r, p)
    if mode == "nolog" and r > mpf(1) / 2:
        raise ValueError("the no-log expansion needs |q| <= 2^-p")
    abs_q = r ** p
    value = mpc(0)
    rounding = mpf(0)
    deriv = mpf(0)
    kept = term.retained()
    if mode in ("log", "only-log") and kept is not None:
        e, s = kept
        z = tv ** e * _zeta(s, p)
        value += mp.log(1 - z)
        rounding += 4 * e * abs(z) * ulp(mpf(1)) + 4 * ulp(mpf(1))
        deriv += e * r ** (e - 1) / (1 - r ** e)
    if mode == "only-log":
        bound = mpf("2.02") * abs_q if kept is None else mpf("1.2") * mp.sqrt(abs_q)
    else:
        if nu >= 1:
            coeffs = beta_coefficients(term, nu, primed=(mode == "log"))
            total, weight, dd = _series_sum(coeffs, tv)
            value += total
            rounding += 4 * (nu + 4) * weight * ulp(mpf(1))
            deriv += dd
        const = mpf("5.1") if mode == "nolog" else mpf("3.1")
        if nu == 0 and kept is None:
            bound = mpf("2.02") * abs_q
        else:
            bound = (mpf("2.2") * nu / p + const) * r ** (nu + 1)
    err = (bound + rounding + 2 * deriv * _t_err(t)) * mpf("1.01")
    return BigComplex(BigReal(value.real, err), BigReal(value.imag, err))


@dataclass(frozen=True)
class OrbitUnit:
    orbit: Orbit
    m: int
    terms: tuple[SiegelTerm, ...]


def build_orbit_unit(ctx: GroupContext, orbit: Orbit, shift: int = 0) -> OrbitUnit:
    terms = tuple(make_term(a, ctx.p, shift) for a in orbit.members)
    return OrbitUnit(orbit, ctx.m, terms)


def orbit_unit_value(unit: OrbitUnit, tau: mpc) -> BigComplex:
    value = mpc(1)
    rel = mpf(0)
    for term in unit.terms:
        g = siegel_value(term, tau)
        gv = g.to_mpc()
        value *= gv ** unit.m
        rel += unit.m * g.err / abs(gv)
    err = abs(value) * (mp.expm1(rel * mpf("1.01")) + 4 * len(unit.terms) * unit.m * ulp(mpf(1)))
    return BigComplex(BigReal(value.real, err), BigReal(value.imag, err))


@dataclass(frozen=True)
class CuspSeries:
    cusp: int
    index: int
    p: int
    m: int
    terms: tuple[SiegelTerm, ...]
    ord: Fraction
    log_abs_gamma: BigReal
    gamma_c: BigComplex
    gamma_cyclo: CycloElement
    log_terms: tuple[tuple[int, int, int], ...]
    beta: tuple[CycloElement, ...]
    beta_primed: tuple[CycloElement, ...]

    @property
    def weight(self) -> int:
        return self.m * len(self.terms)

    @property
    def nu(self) -> int:
        return len(self.beta)

    def degree_part(self) -> Fraction:
        return max(self.ord, Fraction(0))


def translated_members(ctx: GroupContext, orbit: Orbit, index: int, cusp: int) -> list[Point]:
    g = galois_matrix(ctx, ctx.coset_rep(index))
    s = reduce_matrix(sigma_c(ctx, cusp), ctx.p)
    return [act_right(act_right(a, g, ctx.p), s, ctx.p) for a in orbit.members]


def cusp_series(ctx: GroupContext, unit: OrbitUnit, index: int, cusp: int, nu: int) -> CuspSeries:
    p, m = ctx.p, unit.m
    terms = tuple(make_term(a, p) for a in translated_members(ctx, unit.orbit, index, cusp))
    ord_c = p * m * sum((t.ell for t in terms), Fraction(0))

    log_gamma = BigReal(mpf(0))
    root = Fraction(0)
    gamma_cyclo = CycloElement.rational(p, 1)
    for t in terms:
        root += t.gamma_root
        if t.exponent == 0:
            log_gamma = log_gamma + t.log_abs_gamma()
            gamma_cyclo = gamma_cyclo * t.gamma_factor
    log_gamma = log_gamma * m
    gamma_cyclo = gamma_cyclo ** m
    phase = BigReal.pi() * BigReal.exact(root * m)
    gamma_c = BigComplex.unit(phase) * embed(gamma_cyclo, 1)

    kept = Counter(t.retained() for t in terms if t.retained() is not None)
    log_terms = tuple(sorted((e, s, n) for (e, s), n in kept.items()))

    beta: list[CycloElement] = [CycloElement.rational(p, 0)] * nu
    beta_p: list[CycloElement] = [CycloElement.rational(p, 0)] * nu
    if nu:
        beta_acc = [[Fraction(0)] * p for _ in range(nu)]
        prime_acc = [[Fraction(0)] * p for _ in range(nu)]
        for t in terms:
            skip = t.retained()
            skipped = False
            for e, s in t.factors(nu):
                drop = skip is not None and not skipped and (e, s) == skip
                skipped = skipped or drop
                j = 1
                while e * j <= nu:
                    step = Fraction(m, j)
                    beta_acc[e * j - 1][s * j % p] -= step
                    if not drop:
                        prime_acc[e * j - 1][s * j % p] -= step
                    j += 1
        beta = [CycloElement.from_full(p, row) for row in beta_acc]
        beta_p = [CycloElement.from_full(p, row) for row in prime_acc]

    return CuspSeries(
        cusp=cusp,
        index=index,
        p=p,
        m=m,
        terms=terms,
        ord=ord_c,
        log_abs_gamma=log_gamma,
        gamma_c=gamma_c,
        gamma_cyclo=gamma_cyclo,
        log_terms=log_terms,
        beta=tuple(beta),
        beta_primed=tuple(beta_p),
    )


def real_root(q: BigReal, p: int) -> BigReal:
    a = abs(q)
    if a.lo <= 0:
        raise ValueError("q must be bounded away from 0")
    r = (a.log() / p).exp()
    return r if q.value > 0 else -r


def log_factor_real(t: BigReal, e: int, s: int, p: int) -> BigReal:
    te = t ** e
    c = BigReal.rounded(mp.cospi(mpf(2 * s) / p))
    inner = 1 - 2 * te * c + te * te
    return inner.log() / 2


def unit_log_abs(series: CuspSeries, q_c: BigReal, mode: str = "full-log", nu: Optional[int] = None) -> BigReal:
    """log|U^{σℓ}(P)| from the expansion at the cusp, for real q_c(P)."""
    if mode not in UNIT_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    p = series.p
    abs_q = abs(q_c)
    region_radius(abs_q)
    t = real_root(q_c, p)
    abs_t = abs(t.value) + t.err
    W = series.weight
    out = BigReal.exact(series.ord / p) * abs_q.log() + series.log_abs_gamma
    if mode == "small-q":
        if abs_q.hi > mpf(2) ** -p:
            raise ValueError("small-q mode needs |q_c| <= 2^-p")
        return BigReal(out.value, out.err + mpf("3.2") * W * abs_t)
    logs = BigReal(mpf(0))
    for e, s, n in series.log_terms:
        logs = logs + log_factor_real(t, e, s, p) * n
    out = out + logs * series.m
    if mode == "full-log":
        return BigReal(out.value, out.err + mpf("1.2") * W * mp.sqrt(abs_q.hi))
    nu = series.nu if nu is None else nu
    if nu > series.nu:
        raise ValueError(f"series only carries {series.nu} coefficients")
    poly = BigReal(mpf(0))
    power = BigReal(mpf(1))
    for k in range(nu):
        power = power * t
        poly = poly + embed(series.beta_primed[k], 1).re * power
    bound = W * (mpf("2.2") * nu / p + mpf("3.1")) * abs_t ** (nu + 1)
    out = out + poly
    return BigReal(out.value, out.err + bound)


@dataclass(frozen=True)
class IdentityCheck:
    ok: bool
    residual: mpf
    orbit_residual: mpf
    samples: int


def random_taus(samples: int, seed: int = 0) -> list[mpc]:
    rng = random.Random(seed)
    return [mpc(mpf(rng.random()), 1 + mpf(rng.random())) for _ in range(samples)]


def product_identity_check(
    ctx: GroupContext, units: Optional[list[OrbitUnit]] = None, samples: int = 10, seed: int = 0, tolerance: mpf = mpf(10) ** -20
) -> IdentityCheck:
    """∏_{a∈M_p} g_ã^{12p} = +p^{12p} and ∏_σ U^σ = ±p^m at random τ."""
    p = ctx.p
    terms = [make_term(a, p) for a in nonzero_points(p)]
    worst = mpf(0)
    worst_orbit = mpf(0)
    log_p = mp.log(p)
    for tau in random_taus(samples, seed):
        total = mpc(0)
        for term in terms:
            total += mp.log(siegel_value(term, tau).to_mpc())
        ratio = mp.exp(12 * p * (total - log_p))
        worst = max(worst, abs(ratio - 1))
        orbit_ratio = mp.exp(ctx.m * (total - log_p))
        worst_orbit = max(worst_orbit, min(abs(orbit_ratio - 1), abs(orbit_ratio + 1)))
        if units is not None:
            prod = mpc(1)
            for u in units:
                prod *= orbit_unit_value(u, tau).to_mpc()
            scaled = prod / mpf(p) ** ctx.m
            worst_orbit = max(worst_orbit, min(abs(scaled - 1), abs(scaled + 1)))
    ok = worst < tolerance and worst_orbit < tolerance
    log.info(
        "product identity p=%d: residual %s, orbit residual %s over %d samples",
        p, mp.nstr(worst, 5), mp.nstr(worst_orbit, 5), samples,
    )
    return IdentityCheck(ok, worst, worst_orbit, samples)
