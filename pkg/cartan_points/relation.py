from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from mpmath import mp, mpf

from .cyclotomic import UnitSystem, embed
from .errors import PrecisionExhausted, ValidationFailed
from .jfunction import region_radius
from .modp import GroupContext, unit_orbits
from .precision import BigReal, big_max, ulp
from .siegel import CuspSeries, build_orbit_unit, cusp_series, log_factor_real, real_root

log = logging.getLogger("cartan.relation")

BK_MODES = ("full-log", "small-q", "truncated")

Matrix = tuple[tuple[BigReal, ...], ...]


@dataclass(frozen=True)
class UnitLogMatrix:
    M: Matrix
    alpha: Matrix
    residual: mpf
    bits: int

    @property
    def d(self) -> int:
        return len(self.M)

    def apply(self, vector: Sequence[BigReal]) -> list[BigReal]:
        return _mat_vec(self.M, vector)

    def solve(self, vector: Sequence[BigReal]) -> list[BigReal]:
        """α·v, the exponent vector whose logarithmic image is v."""
        return _mat_vec(self.alpha, vector)


def _mat_vec(A: Matrix, v: Sequence[BigReal]) -> list[BigReal]:
    out = []
    for row in A:
        acc = BigReal(mpf(0))
        for a, x in zip(row, v):
            acc = acc + a * x
        out.append(acc)
    return out


def build_unit_log_matrix(units: UnitSystem) -> UnitLogMatrix:
    d = units.d
    M = tuple(tuple(units.log_abs(unit, k) for unit in range(d)) for k in range(d))
    values = mp.matrix([[M[k][j].value for j in range(d)] for k in range(d)])
    try:
        inv = mp.inverse(values)
    except ZeroDivisionError as exc:
        raise PrecisionExhausted("unit log matrix singular within precision", bits=mp.prec) from exc
    product = values * inv
    residual = max(
        sum(abs(product[i, j] - (1 if i == j else 0)) for j in range(d)) for i in range(d)
    )
    norm_inv = max(sum(abs(inv[i, j]) for j in range(d)) for i in range(d))
    e_M = max(M[k][j].err for k in range(d) for j in range(d))
    eta = residual + norm_inv * d * e_M
    if eta >= mpf(1) / 2:
        raise PrecisionExhausted("unit log matrix singular within precision", bits=mp.prec)
    err = norm_inv * eta / (1 - eta) * mpf("1.01") + 4 * d * ulp(norm_inv)
    alpha = tuple(tuple(BigReal(inv[i, j], err) for j in range(d)) for i in range(d))
    log.debug("unit log matrix d=%d residual=%s alpha err=%s", d, mp.nstr(residual, 5), mp.nstr(err, 5))
    return UnitLogMatrix(M, alpha, residual, mp.prec)


def kappa_of(matrix: UnitLogMatrix) -> BigReal:
    """κ = max_k Σ_ℓ |α_kℓ|."""
    return big_max([sum((abs(a) for a in row), BigReal(mpf(0))) for row in matrix.alpha])


@dataclass(frozen=True)
class CuspFrame:
    p: int
    d: int
    m: int
    cusp: int
    weight: int
    ords: tuple[Fraction, ...]
    log_gammas: tuple[BigReal, ...]
    alpha: Matrix
    delta: tuple[BigReal, ...]
    theta: tuple[BigReal, ...]
    kappa: BigReal
    Theta: BigReal
    delta_max: BigReal
    theta_max: BigReal
    pivot: int
    log_terms: tuple[tuple[tuple[int, int, int], ...], ...]
    q_coeffs: tuple[tuple[BigReal, ...], ...]
    cos_table: tuple[mpf, ...]
    bits: int

    @property
    def nu(self) -> int:
        return len(self.q_coeffs[0]) if self.q_coeffs else 0

    def nonzero_indices(self) -> list[int]:
        return [k for k in range(1, self.d) if self.delta[k].is_decided()]

    def truncation_bound(self, abs_t: mpf, nu: Optional[int] = None) -> mpf:
        """Θ(2.2ν/p + 3.1)|t|^{ν+1}."""
        nu = self.nu if nu is None else nu
        return self.Theta.hi * (mpf("2.2") * nu / self.p + mpf("3.1")) * abs_t ** (nu + 1)

    # f_k and f_k′ on floats of the working precision

    def _logs(self, t: mpf) -> tuple[list[mpf], list[mpf], mpf]:
        max_e = max((e for terms in self.log_terms for e, _, _ in terms), default=1)
        powers = [mpf(1)]
        for _ in range(2 * max_e):
            powers.append(powers[-1] * t)
        L, dL = [], []
        scale = mpf(0)
        for terms in self.log_terms:
            acc = mpf(0)
            dacc = mpf(0)
            for e, s, n in terms:
                c = self.cos_table[s]
                te, t2e = powers[e], powers[2 * e]
                inner = 1 - 2 * te * c + t2e
                acc += n * mp.log(inner) / 2
                dacc += n * e * (t2e - te * c) / (t * inner)
                scale += n
            L.append(acc)
            dL.append(dacc)
        return L, dL, scale

    def evaluate(self, t: mpf, nu: Optional[int] = None) -> list[BigReal]:
        """f_0(t), …, f_{d-1}(t) with rounding and coefficient errors (truncation excluded)."""
        nu = self.nu if nu is None else min(nu, self.nu)
        L, _, scale = self._logs(t)
        log_t = mp.log(abs(t))
        out = []
        for k in range(self.d):
            head = -self.p * self.delta[k].value * log_t
            v = head + self.theta[k].value
            mag = abs(head) + abs(self.theta[k].value)
            err = self.p * self.delta[k].err * abs(log_t) + self.theta[k].err
            poly = mpf(0)
            for coeff in reversed(self.q_coeffs[k][:nu]):
                poly = (poly + coeff.value) * t
            v += poly
            mag += abs(poly)
            err += sum(c.err * abs(t) ** (n + 1) for n, c in enumerate(self.q_coeffs[k][:nu]))
            for j in range(self.d):
                a = self.alpha[k][j]
                v += self.m * a.value * L[j]
                mag += self.m * abs(a.value * L[j])
                err += self.m * a.err * abs(L[j])
            err += (scale * self.m * self.d + nu + 8) * 8 * ulp(mpf(1)) * (1 + mag)
            out.append(BigReal(v, err * mpf("1.01")))
        return out

    def f(self, k: int, t: mpf, nu: Optional[int] = None) -> BigReal:
        return self.evaluate(t, nu)[k]

    def derivative(self, k: int, t: mpf, nu: Optional[int] = None) -> BigReal:
        nu = self.nu if nu is None else min(nu, self.nu)
        _, dL, scale = self._logs(t)
        v = -self.p * self.delta[k].value / t
        mag = abs(v)
        err = self.p * self.delta[k].err / abs(t)
        poly = mpf(0)
        coeffs = self.q_coeffs[k][:nu]
        for n in range(len(coeffs), 0, -1):
            poly = poly * t + n * coeffs[n - 1].value
        v += poly
        mag += abs(poly)
        err += sum((n + 1) * c.err * abs(t) ** n for n, c in enumerate(coeffs))
        for j in range(self.d):
            a = self.alpha[k][j]
            v += self.m * a.value * dL[j]
            mag += self.m * abs(a.value * dL[j])
            err += self.m * a.err * abs(dL[j])
        err += (scale * self.m * self.d + nu + 8) * 16 * ulp(mpf(1)) * (1 + mag)
        return BigReal(v, err * mpf("1.01"))

    def derivative_enclosure(self, k: int, lo: mpf, hi: mpf, nu: Optional[int] = None) -> BigReal:
        """Bounds f_k′(t) for every t in [lo, hi]; the interval must not contain 0."""
        nu = self.nu if nu is None else min(nu, self.nu)
        t = BigReal.spanning(lo, hi)
        powers: dict[int, BigReal] = {}

        def pw(e: int) -> BigReal:
            if e not in powers:
                powers[e] = t ** e
            return powers[e]

        out = -(self.delta[k] * self.p) / t
        for n, coeff in enumerate(self.q_coeffs[k][:nu], start=1):
            out = out + coeff * pw(n - 1) * n
        for j, terms in enumerate(self.log_terms):
            acc = BigReal(mpf(0))
            for e, s, n in terms:
                c = BigReal.rounded(self.cos_table[s])
                te, t2e = pw(e), pw(2 * e)
                inner = 1 - te * c * 2 + t2e
                acc = acc + (t2e - te * c) * (n * e) / (t * inner)
            out = out + self.alpha[k][j] * acc * self.m
        return out


def _select_pivot(delta: Sequence[BigReal]) -> int:
    candidates = [k for k in range(1, len(delta)) if delta[k].is_decided()]
    if not candidates:
        raise ValidationFailed("all delta_{c,k} vanish for k >= 1")
    return min(candidates, key=lambda k: abs(delta[k].value))


def build_cusp_frame(
    ctx: GroupContext,
    units: UnitSystem,
    matrix: UnitLogMatrix,
    cusp: int,
    nu: int,
    series: Optional[Sequence[CuspSeries]] = None,
) -> CuspFrame:
    p, d, m = ctx.p, ctx.d, ctx.m
    if units.d != d or matrix.d != d:
        raise ValueError(f"unit system of rank {units.d} does not match d = {d}")
    if series is None:
        unit = build_orbit_unit(ctx, unit_orbits(ctx)[0])
        series = [cusp_series(ctx, unit, ell, cusp, nu) for ell in range(d)]
    alpha = matrix.alpha
    ords = tuple(s.ord for s in series)
    log_gammas = tuple(s.log_abs_gamma for s in series)

    delta, theta = [], []
    for k in range(d):
        dk = BigReal(mpf(0))
        tk = BigReal(mpf(0))
        for ell in range(d):
            dk = dk + alpha[k][ell] * BigReal.exact(ords[ell])
            tk = tk + alpha[k][ell] * log_gammas[ell]
        delta.append(-dk / p)
        theta.append(tk)

    kappa = kappa_of(matrix)
    weight = series[0].weight
    Theta = kappa * weight

    real_betas = [[embed(b, 1).re for b in s.beta_primed[:nu]] for s in series]
    q_coeffs = []
    for k in range(d):
        row = []
        for n in range(nu):
            acc = BigReal(mpf(0))
            for ell in range(d):
                acc = acc + alpha[k][ell] * real_betas[ell][n]
            row.append(acc)
        q_coeffs.append(tuple(row))

    frame = CuspFrame(
        p=p,
        d=d,
        m=m,
        cusp=cusp,
        weight=weight,
        ords=ords,
        log_gammas=log_gammas,
        alpha=alpha,
        delta=tuple(delta),
        theta=tuple(theta),
        kappa=kappa,
        Theta=Theta,
        delta_max=big_max([abs(x) for x in delta]),
        theta_max=big_max([abs(x) for x in theta]),
        pivot=_select_pivot(delta),
        log_terms=tuple(s.log_terms for s in series),
        q_coeffs=tuple(q_coeffs),
        cos_table=tuple(mp.cospi(mpf(2 * s) / p) for s in range(p)),
        bits=mp.prec,
    )
    log.debug(
        "frame c=%d pivot=%d delta=%s Theta=%s",
        cusp, frame.pivot, [mp.nstr(x.value, 8) for x in delta], mp.nstr(Theta.value, 8),
    )
    return frame


def bk_from_q(frame: CuspFrame, q_c: BigReal, mode: str = "truncated", nu: Optional[int] = None) -> list[BigReal]:
    if mode not in BK_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    p = frame.p
    abs_q = abs(q_c)
    region_radius(abs_q)
    log_q_inv = -abs_q.log()
    t = real_root(q_c, p)
    abs_t = abs(t.value) + t.err
    Theta = frame.Theta.hi

    if mode == "small-q":
        if abs_q.hi > mpf(2) ** -p:
            raise ValueError("small-q mode needs |q_c| <= 2^-p")
        extra = mpf("3.2") * Theta * abs_t
        return [_widen(frame.delta[k] * log_q_inv + frame.theta[k], extra) for k in range(frame.d)]

    L = []
    for terms in frame.log_terms:
        acc = BigReal(mpf(0))
        for e, s, n in terms:
            acc = acc + log_factor_real(t, e, s, p) * n
        L.append(acc)
    out = []
    nu = frame.nu if nu is None else nu
    if mode == "truncated" and nu > frame.nu:
        raise ValueError(f"frame only carries {frame.nu} coefficients")
    for k in range(frame.d):
        b = frame.delta[k] * log_q_inv + frame.theta[k]
        for j in range(frame.d):
            b = b + frame.alpha[k][j] * L[j] * frame.m
        if mode == "full-log":
            out.append(_widen(b, mpf("1.2") * Theta * mp.sqrt(abs_q.hi)))
            continue
        power = BigReal(mpf(1))
        for n in range(nu):
            power = power * t
            b = b + frame.q_coeffs[k][n] * power
        out.append(_widen(b, frame.truncation_bound(abs_t, nu)))
    return out


def _widen(x: BigReal, extra: mpf) -> BigReal:
    return BigReal(x.value, x.err + extra)


def b_bound(frame: CuspFrame, log_q_inv: BigReal) -> BigReal:
    """Upper bound for max_k |b_k| at a point with log|q_c^{-1}| = log_q_inv."""
    base = frame.delta_max * log_q_inv + frame.theta_max
    general = base + frame.Theta * BigReal.exact(frame.p).log()
    if log_q_inv.lo >= frame.p * mp.log(2):
        return base + frame.Theta * BigReal.exact(Fraction(8, 5))
    return general
