from __future__ import annotations

import logging
from functools import lru_cache
from typing import Optional

from mpmath import mp, mpc, mpf
from sympy import divisor_sigma

from .errors import PrecisionExhausted
from .precision import BigReal, brent_root, ulp, with_precision

log = logging.getLogger("cartan.jfunction")

DEFAULT_TERMS = 10
MAX_TERMS = 640
J_1728 = 1728


@lru_cache(maxsize=8)
def j_coefficients(n_terms: int) -> tuple[int, ...]:
    """c_0, …, c_{n_terms} with j(q) = 1/q + Σ c_n q^n."""
    size = n_terms + 2
    e4 = [1] + [240 * int(divisor_sigma(n, 3)) for n in range(1, size)]
    e4_cubed = _mul(_mul(e4, e4, size), e4, size)
    # ∏(1 - q^n)^{-24} from n·f_n = 24·Σ σ(k) f_{n-k}
    sigma = [0] + [int(divisor_sigma(k)) for k in range(1, size)]
    inv_eta = [1]
    for n in range(1, size):
        acc = sum(sigma[k] * inv_eta[n - k] for k in range(1, n + 1))
        inv_eta.append(24 * acc // n)
    series = _mul(e4_cubed, inv_eta, size)
    return tuple(series[n + 1] for n in range(n_terms + 1))


def _mul(a: list[int], b: list[int], size: int) -> list[int]:
    out = [0] * size
    for i, x in enumerate(a[:size]):
        if x:
            for k, y in enumerate(b[: size - i]):
                out[i + k] += x * y
    return out


def j_series(q: mpc, n_terms: int) -> mpc:
    acc = mpc(0)
    for c in reversed(j_coefficients(n_terms)):
        acc = acc * q + c
    return 1 / q + acc


@lru_cache(maxsize=16)
def _j_at_boundary(bits: int) -> mpf:
    with mp.workprec(bits + 32):
        return +(1728 * mp.kleinj(mpc(0, mp.sqrt(3) / 2)).real)


@lru_cache(maxsize=64)
def _j_real(radius: mpf, bits: int) -> mpf:
    with mp.workprec(bits + 32):
        return +(1728 * mp.kleinj(mpc(0, -mp.log(radius) / (2 * mp.pi))).real)


def boundary_q() -> mpf:
    return mp.exp(-mp.pi * mp.sqrt(3))


def region_radius(abs_q: BigReal) -> Optional[mpf]:
    """None when |q| <= e^{-π√3} is certified, else the radius the series bounds must use.

    An enclosure straddling the boundary (j = 0 sits on it) gets its upper end;
    one certified outside raises ValueError.
    """
    r = BigReal.rounded(boundary_q(), 4)
    if abs_q.hi <= r.lo:
        return None
    if abs_q.lo > r.hi:
        raise ValueError(f"|q| = {mp.nstr(abs_q.lo, 12)} exceeds e^(-pi*sqrt(3))")
    return max(abs_q.hi, r.hi)


def tail_bound(n_terms: int, radius: Optional[mpf] = None) -> mpf:
    """j(r) - j_N(r) at r = e^{-π√3} (or ``radius``), bounding the tail for |q| <= r."""
    r = boundary_q() if radius is None else radius
    head = j_series(mpc(r), n_terms).real
    full = _j_at_boundary(mp.prec) if radius is None else _j_real(r, mp.prec)
    return full - head + 64 * ulp(mpf(10) ** 6)


def evaluate_j(q: BigReal, n_terms: Optional[int] = None, auto_raise: bool = True) -> BigReal:
    """j(q) for real q with |q| <= e^{-π√3}; N is doubled until err < 1/4."""
    radius = region_radius(abs(q))
    N = n_terms or DEFAULT_TERMS
    while True:
        coeffs = j_coefficients(N)
        acc = BigReal(mpf(0))
        for c in reversed(coeffs):
            acc = acc * q + c
        value = BigReal.exact(1) / q + acc
        result = BigReal(value.value, value.err + tail_bound(N, radius))
        if result.err < mpf(1) / 4 or not auto_raise:
            return result
        if N >= MAX_TERMS:
            raise PrecisionExhausted(f"j(q) err {mp.nstr(result.err, 5)} with {N} terms", bits=mp.prec)
        N *= 2


def q_sign_for_j(j: int) -> int:
    """Sign of the real q-parameter with j(q) = j: +1 for j >= 1728, -1 for j <= 0, 0 otherwise."""
    if j >= J_1728:
        return 1
    if j <= 0:
        return -1
    return 0


def invert_j(j: int, bits: Optional[int] = None) -> BigReal:
    """The real q with |q| <= e^{-π√3} and j(q) = j."""
    if bits is not None:
        with with_precision(bits):
            return invert_j(j)
    sign = q_sign_for_j(j)
    if sign == 0:
        raise ValueError(f"j = {j} has no real q-parameter")
    if j == 0:
        return -BigReal.rounded(boundary_q(), 8)
    if j == J_1728:
        return BigReal.rounded(mp.exp(-2 * mp.pi), 8)
    # solve in x = log|q^{-1}|
    far = mp.log(abs(j) + 2000)
    near = 2 * mp.pi if sign > 0 else mp.pi * mp.sqrt(3) + mpf(10) ** -12
    tol = mp.ldexp(far, 24 - mp.prec)

    def q_of(x: BigReal) -> BigReal:
        q = (-x).exp()
        return q if sign > 0 else -q

    def residual(x: mpf) -> BigReal:
        return evaluate_j(q_of(BigReal(x))) - j

    root = brent_root(residual, near, far, tol)
    q = q_of(root)
    log.debug("invert_j(%d) -> q=%s", j, mp.nstr(q.value, 20))
    return q
