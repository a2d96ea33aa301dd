from __future__ import annotations

import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Optional, Sequence, TypeVar, Union

from mpmath import mp, mpc, mpf

from .errors import AmbiguousValue, ConfigError, NoSignChange, PrecisionExhausted

log = logging.getLogger("cartan.precision")

MIN_BITS = 64
DEFAULT_CEILING = 1 << 16

Number = Union[int, float, Fraction, mpf, "BigReal"]
T = TypeVar("T")


@contextmanager
def with_precision(bits: int) -> Iterator[int]:
    if bits < MIN_BITS:
        raise ConfigError(f"precision must be at least {MIN_BITS} bits, got {bits}")
    with mp.workprec(int(bits)):
        yield int(bits)


def escalate(fn: Callable[[int], T], bits: int, ceiling: int = DEFAULT_CEILING) -> T:
    current = max(int(bits), MIN_BITS)
    while True:
        try:
            return fn(current)
        except PrecisionExhausted as exc:
            if current * 2 > ceiling:
                raise PrecisionExhausted(
                    f"{exc} (gave up at {current} bits, ceiling {ceiling})", bits=current
                ) from exc
            log.warning("precision exhausted at %d bits: %s; retrying at %d", current, exc, current * 2)
            current *= 2


def ulp(x: mpf) -> mpf:
    return mp.ldexp(abs(x), 1 - mp.prec)


def to_fraction(x: mpf) -> Fraction:
    if not mp.isfinite(x):
        raise PrecisionExhausted(f"non-finite value {x}")
    man, exp = x.man_exp
    if exp >= 0:
        return Fraction(int(man) << int(exp))
    return Fraction(int(man), 1 << int(-exp))


def _safety() -> mpf:
    return mpf("1.01")


@dataclass(frozen=True)
class BigReal:
    value: mpf
    err: mpf = mpf(0)

    # construction

    @classmethod
    def exact(cls, x: Number) -> BigReal:
        if isinstance(x, BigReal):
            return x
        if isinstance(x, Fraction):
            if x.denominator == 1:
                return cls.exact(x.numerator)
            v = mpf(x.numerator) / x.denominator
            return cls(v, ulp(v))
        v = mpf(x)
        if isinstance(x, int) and int(v) != x:
            return cls(v, ulp(v))
        return cls(v, mpf(0))

    @classmethod
    def rounded(cls, v: mpf, ulps: int = 2) -> BigReal:
        """Value produced by one library transcendental call."""
        return cls(mpf(v), ulps * ulp(mpf(v)))

    @classmethod
    def pi(cls) -> BigReal:
        return cls.rounded(+mp.pi)

    @classmethod
    def spanning(cls, lo: mpf, hi: mpf) -> BigReal:
        lo, hi = mpf(lo), mpf(hi)
        if lo > hi:
            lo, hi = hi, lo
        mid = (lo + hi) / 2
        return cls(mid, (hi - lo) / 2 + 2 * ulp(max(abs(lo), abs(hi))))

    # accessors

    @property
    def lo(self) -> mpf:
        return self.value - self.err

    @property
    def hi(self) -> mpf:
        return self.value + self.err

    def magnitude(self) -> mpf:
        return abs(self.value) + self.err

    def contains(self, x: Number) -> bool:
        x = x.value if isinstance(x, BigReal) else x
        return to_fraction(mpf(abs(self.value - mpf(x)))) <= to_fraction(self.err) + to_fraction(ulp(self.value))

    def sign(self) -> int:
        if self.value == 0 and self.err == 0:
            return 0
        if abs(self.value) <= self.err:
            return 0
        return 1 if self.value > 0 else -1

    def is_decided(self) -> bool:
        return abs(self.value) > self.err

    def definitely_less(self, other: Number) -> bool:
        return (self - _coerce(other)).hi < 0

    def __float__(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        return f"BigReal({mp.nstr(self.value, 20)} ± {mp.nstr(self.err, 3)})"

    # arithmetic

    def __neg__(self) -> BigReal:
        return BigReal(-self.value, self.err)

    def __abs__(self) -> BigReal:
        return BigReal(abs(self.value), self.err)

    def __add__(self, other: Number) -> BigReal:
        o = _coerce(other)
        v = self.value + o.value
        return BigReal(v, (self.err + o.err) * _safety() + ulp(v))

    __radd__ = __add__

    def __sub__(self, other: Number) -> BigReal:
        return self + (-_coerce(other))

    def __rsub__(self, other: Number) -> BigReal:
        return _coerce(other) + (-self)

    def __mul__(self, other: Number) -> BigReal:
        o = _coerce(other)
        v = self.value * o.value
        prop = abs(self.value) * o.err + abs(o.value) * self.err + self.err * o.err
        return BigReal(v, prop * _safety() + ulp(v))

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> BigReal:
        o = _coerce(other)
        if abs(o.value) <= o.err:
            raise PrecisionExhausted("division by a quantity not bounded away from zero", bits=mp.prec)
        v = self.value / o.value
        den = abs(o.value) * (abs(o.value) - o.err)
        prop = (abs(self.value) * o.err + abs(o.value) * self.err) / den
        return BigReal(v, prop * _safety() + ulp(v))

    def __rtruediv__(self, other: Number) -> BigReal:
        return _coerce(other) / self

    def __pow__(self, n: int) -> BigReal:
        if not isinstance(n, int) or n < 0:
            raise TypeError("BigReal supports non-negative integer powers only")
        if n == 0:
            return BigReal(mpf(1))
        v = self.value ** n
        a = abs(self.value)
        prop = (a + self.err) ** n - a ** n
        return BigReal(v, prop * _safety() + n * ulp(v))

    # elementary functions

    def sqrt(self) -> BigReal:
        if self.value == 0 and self.err == 0:
            return BigReal(mpf(0))
        if self.lo <= 0:
            raise PrecisionExhausted("sqrt of a quantity not bounded away from zero", bits=mp.prec)
        v = mp.sqrt(self.value)
        prop = self.err / (v + mp.sqrt(self.lo))
        return BigReal(v, prop * _safety() + 2 * ulp(v))

    def log(self) -> BigReal:
        if self.lo <= 0:
            raise PrecisionExhausted("log of a quantity not bounded away from zero", bits=mp.prec)
        v = mp.log(self.value)
        prop = self.err / self.lo
        return BigReal(v, prop * _safety() + 2 * ulp(v) + ulp(mpf(1)))

    def exp(self) -> BigReal:
        v = mp.exp(self.value)
        prop = v * mp.expm1(self.err) if self.err else mpf(0)
        return BigReal(v, prop * _safety() + 2 * ulp(v))

    def cos(self) -> BigReal:
        v = mp.cos(self.value)
        return BigReal(v, self.err * _safety() + 2 * ulp(mpf(1)))

    def sin(self) -> BigReal:
        v = mp.sin(self.value)
        return BigReal(v, self.err * _safety() + 2 * ulp(mpf(1)))


def _coerce(x: Number) -> BigReal:
    return x if isinstance(x, BigReal) else BigReal.exact(x)


def big_max(values: Sequence[BigReal]) -> BigReal:
    """Upper envelope: the value with the largest upper end, err widened to cover the rest."""
    best = max(values, key=lambda v: v.hi)
    lo = max(v.lo for v in values)
    return BigReal(best.value, max(best.hi - best.value, best.value - lo, mpf(0)))


@dataclass(frozen=True)
class BigComplex:
    re: BigReal
    im: BigReal

    @classmethod
    def exact(cls, re: Number, im: Number = 0) -> BigComplex:
        return cls(_coerce(re), _coerce(im))

    @classmethod
    def from_mpc(cls, z: mpc, ulps: int = 4) -> BigComplex:
        z = mpc(z)
        e = ulps * ulp(abs(z)) if z != 0 else mpf(0)
        return cls(BigReal(z.real, e), BigReal(z.imag, e))

    @classmethod
    def unit(cls, angle: BigReal) -> BigComplex:
        return cls(angle.cos(), angle.sin())

    def to_mpc(self) -> mpc:
        return mpc(self.re.value, self.im.value)

    @property
    def err(self) -> mpf:
        return self.re.err + self.im.err

    def __repr__(self) -> str:
        return f"BigComplex({self.re!r}, {self.im!r})"

    def conjugate(self) -> BigComplex:
        return BigComplex(self.re, -self.im)

    def __neg__(self) -> BigComplex:
        return BigComplex(-self.re, -self.im)

    def __add__(self, other: Union[BigComplex, Number]) -> BigComplex:
        o = other if isinstance(other, BigComplex) else BigComplex(_coerce(other), BigReal(mpf(0)))
        return BigComplex(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other: Union[BigComplex, Number]) -> BigComplex:
        o = other if isinstance(other, BigComplex) else BigComplex(_coerce(other), BigReal(mpf(0)))
        return BigComplex(self.re - o.re, self.im - o.im)

    def __rsub__(self, other: Number) -> BigComplex:
        return BigComplex(_coerce(other), BigReal(mpf(0))) - self

    def __mul__(self, other: Union[BigComplex, Number]) -> BigComplex:
        if not isinstance(other, BigComplex):
            s = _coerce(other)
            return BigComplex(self.re * s, self.im * s)
        a, b, c, d = self.re, self.im, other.re, other.im
        return BigComplex(a * c - b * d, a * d + b * c)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> BigComplex:
        result = BigComplex.exact(1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def abs(self) -> BigReal:
        return (self.re * self.re + self.im * self.im).sqrt()

    def abs_upper(self) -> mpf:
        return mp.sqrt((abs(self.re.value) + self.re.err) ** 2 + (abs(self.im.value) + self.im.err) ** 2)

    def exp(self) -> BigComplex:
        r = self.re.exp()
        return BigComplex(r * self.im.cos(), r * self.im.sin())

    def log(self) -> BigComplex:
        """Principal logarithm; the argument must stay away from the negative real axis."""
        modulus = self.abs()
        z = self.to_mpc()
        if z.real <= 0 and abs(z.imag) <= self.im.err:
            raise PrecisionExhausted("log argument straddles the branch cut", bits=mp.prec)
        arg = mp.arg(z)
        # |d arg| <= |dz| / |z|
        arg_err = (self.re.err + self.im.err) / modulus.lo
        return BigComplex(modulus.log(), BigReal(arg, arg_err * _safety() + 2 * ulp(arg)))


def nearest_integer_distance(x: BigReal) -> BigReal:
    if x.err >= mpf(1) / 4:
        raise PrecisionExhausted("nearest integer is ambiguous at this precision", bits=mp.prec)
    n = mp.nint(x.value)
    d = abs(x.value - n)
    if d > mpf(1) / 2:
        d = mpf(1) / 2
    return BigReal(d, x.err * _safety() + ulp(d))


@dataclass(frozen=True)
class ContinuedFraction:
    partial_quotients: tuple[int, ...]
    convergents: tuple[tuple[int, int], ...]

    def last(self) -> tuple[int, int]:
        return self.convergents[-1]


def continued_fraction_expand(x: BigReal, q_limit: int) -> ContinuedFraction:
    """Convergents of ``x`` with denominator <= q_limit.

    Partial quotients are read off the exact rational endpoints of the error
    interval; they are kept only while both endpoints agree.
    """
    if q_limit < 1:
        raise ValueError("q_limit must be >= 1")
    a = to_fraction(x.value) - to_fraction(x.err)
    b = to_fraction(x.value) + to_fraction(x.err)
    quotients: list[int] = []
    convergents: list[tuple[int, int]] = []
    h_prev, h = 0, 1
    k_prev, k = 1, 0
    while True:
        fa, fb = a.numerator // a.denominator, b.numerator // b.denominator
        if fa != fb:
            # the next quotient is uncertain; fine only if no admissible convergent is left
            smallest = min(fa, fb)
            if smallest * k + k_prev > q_limit and convergents:
                break
            raise PrecisionExhausted(
                f"continued fraction undecided after {len(quotients)} quotients", bits=mp.prec
            )
        h_prev, h = h, fa * h + h_prev
        k_prev, k = k, fa * k + k_prev
        if k > q_limit:
            break
        quotients.append(fa)
        convergents.append((h, k))
        ra, rb = a - fa, b - fb
        if ra == 0 and rb == 0:
            break
        if ra == 0 or rb == 0:
            rest = rb if ra == 0 else ra
            lower_next = math.floor(1 / rest)
            if lower_next * k + k_prev > q_limit:
                break
            raise PrecisionExhausted("continued fraction hits a rational endpoint", bits=mp.prec)
        a, b = 1 / ra, 1 / rb
    return ContinuedFraction(tuple(quotients), tuple(convergents))


def _as_mpf(x: Union[BigReal, Number]) -> mpf:
    return x.value if isinstance(x, BigReal) else mpf(x)


def brent_root(
    f: Callable[[mpf], BigReal],
    a: Union[BigReal, Number],
    b: Union[BigReal, Number],
    tol: Union[BigReal, Number],
    max_iter: int = 500,
) -> BigReal:
    """Bracketed root of ``f`` on [a, b] by Brent's method.

    The result's err is the width of the final bracket, so the sign change
    of ``f`` lies inside [value - err, value + err].
    """
    a, b, tol = _as_mpf(a), _as_mpf(b), _as_mpf(tol)
    if a > b:
        a, b = b, a
    lo_end, hi_end = a, b
    scale = max(abs(a), abs(b), mpf(1))
    if tol < 8 * ulp(scale):
        raise PrecisionExhausted(f"tolerance {mp.nstr(tol, 5)} below working precision", bits=mp.prec)

    fa, fb = f(a), f(b)
    sa, sb = fa.sign(), fb.sign()
    if fa.value == 0 and fa.err == 0:
        return BigReal(a)
    if fb.value == 0 and fb.err == 0:
        return BigReal(b)
    if sa == 0 or sb == 0 or sa == sb:
        raise NoSignChange(f"no decisive sign change on [{mp.nstr(a, 12)}, {mp.nstr(b, 12)}]")

    fa_v, fb_v = fa.value, fb.value
    if abs(fa_v) < abs(fb_v):
        a, b, fa_v, fb_v = b, a, fb_v, fa_v
    c, fc_v = a, fa_v
    d = c
    bisected = True
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fa_v != fc_v and fb_v != fc_v:
            s = (
                a * fb_v * fc_v / ((fa_v - fb_v) * (fa_v - fc_v))
                + b * fa_v * fc_v / ((fb_v - fa_v) * (fb_v - fc_v))
                + c * fa_v * fb_v / ((fc_v - fa_v) * (fc_v - fb_v))
            )
        else:
            s = b - fb_v * (b - a) / (fb_v - fa_v)
        lo_q, hi_q = sorted(((3 * a + b) / 4, b))
        if (
            not (lo_q < s < hi_q)
            or (bisected and abs(s - b) >= abs(b - c) / 2)
            or (not bisected and abs(s - b) >= abs(c - d) / 2)
            or (bisected and abs(b - c) < tol)
            or (not bisected and abs(c - d) < tol)
        ):
            s = (a + b) / 2
            bisected = True
        else:
            bisected = False
        fs = f(s)
        if fs.value == 0 and fs.err == 0:
            return BigReal(s)
        ss = fs.sign()
        if ss == 0:
            log.debug("sign of f undecided at %s; returning current bracket", mp.nstr(s, 15))
            width = max(abs(s - a), abs(s - b))
            return BigReal(s, width)
        d, c, fc_v = c, b, fb_v
        if (fa_v < 0) != (fs.value < 0):
            b, fb_v = s, fs.value
        else:
            a, fa_v = s, fs.value
        if abs(fa_v) < abs(fb_v):
            a, b, fa_v, fb_v = b, a, fb_v, fa_v
    else:
        raise PrecisionExhausted("Brent iteration did not converge", bits=mp.prec)
    root = min(max(b, lo_end), hi_end)
    return BigReal(root, abs(b - a))


@dataclass(frozen=True)
class SignSegment:
    lo: mpf
    hi: mpf
    sign: int
    magnitude: mpf


Enclosure = Callable[[mpf, mpf], BigReal]


def certify_sign_segments(
    enclosure: Enclosure,
    lo: Union[BigReal, Number],
    hi: Union[BigReal, Number],
    tol: Union[BigReal, Number],
    max_evals: int = 1 << 16,
) -> list[SignSegment]:
    """Split [lo, hi] into stretches where ``enclosure(a, b)`` has a certified sign.

    ``enclosure(a, b)`` must bound the function over all of [a, b]. Stretches
    narrower than ``tol`` whose sign stays open come back with sign 0 and
    ``magnitude`` bounding |f| on them. Neighbours of equal sign are merged.
    """
    lo, hi, tol = _as_mpf(lo), _as_mpf(hi), _as_mpf(tol)
    if lo > hi:
        lo, hi = hi, lo
    out: list[SignSegment] = []
    stack = [(lo, hi)]
    evals = 0
    while stack:
        a, b = stack.pop()
        evals += 1
        if evals > max_evals:
            raise PrecisionExhausted(
                f"sign of f not certified on [{mp.nstr(lo, 12)}, {mp.nstr(hi, 12)}] after {max_evals} enclosures",
                bits=mp.prec,
            )
        try:
            enc = enclosure(a, b)
        except PrecisionExhausted:
            enc = None
        s = enc.sign() if enc is not None else 0
        if s == 0 and b - a > tol:
            mid = (a + b) / 2
            stack.append((mid, b))
            stack.append((a, mid))
            continue
        if enc is None:
            raise PrecisionExhausted(f"f cannot be enclosed near {mp.nstr(a, 15)}", bits=mp.prec)
        seg = SignSegment(a, b, s, enc.magnitude())
        if out and out[-1].sign == s:
            prev = out.pop()
            seg = SignSegment(prev.lo, b, s, max(prev.magnitude, seg.magnitude))
        out.append(seg)
    return out


def find_roots_of_derivative(
    derivative: Callable[[BigReal], BigReal],
    lo: Union[BigReal, Number],
    hi: Union[BigReal, Number],
    tol: Union[BigReal, Number],
    enclosure: Optional[Enclosure] = None,
) -> list[BigReal]:
    """Enclosures of every zero of ``derivative`` on [lo, hi], sorted ascending.

    ``derivative`` is evaluated on interval arguments, so between two returned
    enclosures its sign is certified, not sampled.
    """
    def spanned(a: mpf, b: mpf) -> BigReal:
        return derivative(BigReal.spanning(a, b))

    segments = certify_sign_segments(enclosure or spanned, lo, hi, tol)
    return [BigReal((s.lo + s.hi) / 2, (s.hi - s.lo) / 2) for s in segments if s.sign == 0]


def require_decided(x: BigReal, what: str) -> int:
    s = x.sign()
    if s == 0:
        raise AmbiguousValue(f"{what} is not bounded away from zero: {x!r}")
    return s
