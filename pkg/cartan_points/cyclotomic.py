from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import sympy
from mpmath import mp, mpf

from .errors import UnitBasisError
from .modp import GroupContext
from .precision import BigComplex, BigReal, ulp

log = logging.getLogger("cartan.cyclotomic")

Rational = Union[int, Fraction]

SCHINZEL_BOUND = mpf("0.24")


@dataclass(frozen=True)
class CycloElement:
    """Element of ℚ(ζ_p) in the basis ζ, ζ², …, ζ^{p-1}."""

    p: int
    coeffs: tuple[Fraction, ...]

    # construction

    @classmethod
    def from_full(cls, p: int, full: Sequence[Rational]) -> CycloElement:
        c0 = Fraction(full[0])
        return cls(p, tuple(Fraction(full[i]) - c0 for i in range(1, p)))

    @classmethod
    def from_exponents(cls, p: int, terms: Mapping[int, Rational]) -> CycloElement:
        full = [Fraction(0)] * p
        for k, c in terms.items():
            full[k % p] += Fraction(c)
        return cls.from_full(p, full)

    @classmethod
    def rational(cls, p: int, r: Rational) -> CycloElement:
        return cls.from_exponents(p, {0: r})

    @classmethod
    def zeta(cls, p: int, k: int = 1) -> CycloElement:
        return cls.from_exponents(p, {k: 1})

    def full(self) -> list[Fraction]:
        return [Fraction(0), *self.coeffs]

    # predicates

    def is_zero(self) -> bool:
        return not any(self.coeffs)

    def is_integral(self) -> bool:
        return all(c.denominator == 1 for c in self.coeffs)

    def is_rational(self) -> bool:
        return len(set(self.coeffs)) == 1

    def to_rational(self) -> Fraction:
        if not self.is_rational():
            raise ValueError("element is not rational")
        return -self.coeffs[0]

    def is_fixed_by(self, subgroup: Iterable[int]) -> bool:
        return all(galois_apply(t, self) == self for t in subgroup)

    # arithmetic

    def _check(self, other: CycloElement) -> None:
        if other.p != self.p:
            raise ValueError(f"mixing Q(zeta_{self.p}) and Q(zeta_{other.p})")

    def __add__(self, other: Union[CycloElement, Rational]) -> CycloElement:
        o = other if isinstance(other, CycloElement) else CycloElement.rational(self.p, other)
        self._check(o)
        return CycloElement(self.p, tuple(a + b for a, b in zip(self.coeffs, o.coeffs)))

    __radd__ = __add__

    def __neg__(self) -> CycloElement:
        return CycloElement(self.p, tuple(-a for a in self.coeffs))

    def __sub__(self, other: Union[CycloElement, Rational]) -> CycloElement:
        o = other if isinstance(other, CycloElement) else CycloElement.rational(self.p, other)
        return self + (-o)

    def __rsub__(self, other: Rational) -> CycloElement:
        return CycloElement.rational(self.p, other) - self

    def __mul__(self, other: Union[CycloElement, Rational]) -> CycloElement:
        if not isinstance(other, CycloElement):
            r = Fraction(other)
            return CycloElement(self.p, tuple(a * r for a in self.coeffs))
        self._check(other)
        p = self.p
        a, b = self.full(), other.full()
        out = [Fraction(0)] * p
        nz_b = [(j, cb) for j, cb in enumerate(b) if cb]
        for i, ca in enumerate(a):
            if not ca:
                continue
            for j, cb in nz_b:
                out[(i + j) % p] += ca * cb
        return CycloElement.from_full(p, out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> CycloElement:
        if n < 0:
            raise ValueError("negative powers are not supported")
        result = CycloElement.rational(self.p, 1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def conjugate(self) -> CycloElement:
        return galois_apply(self.p - 1, self)

    # numerics

    def embed(self, k: int = 1) -> BigComplex:
        return embed(self, k)

    def __repr__(self) -> str:
        terms = [f"{c}·ζ^{i + 1}" for i, c in enumerate(self.coeffs) if c]
        return f"CycloElement(p={self.p}: {' + '.join(terms) or '0'})"


def galois_apply(t: int, x: CycloElement) -> CycloElement:
    p = x.p
    t %= p
    if t == 0:
        raise ValueError("Galois action needs t in F_p^×")
    full = x.full()
    out = [Fraction(0)] * p
    for k, c in enumerate(full):
        if c:
            out[k * t % p] += c
    return CycloElement.from_full(p, out)


def relative_norm(x: CycloElement, subgroup: Iterable[int]) -> CycloElement:
    """N_{ℚ(ζ_p)/K}(x) for K the fixed field of ``subgroup``."""
    return reduce(lambda acc, t: acc * galois_apply(t, x), subgroup, CycloElement.rational(x.p, 1))


def absolute_norm(x: CycloElement) -> Fraction:
    return relative_norm(x, range(1, x.p)).to_rational()


def embed(x: CycloElement, k: int = 1) -> BigComplex:
    p = x.p
    k %= p
    if k == 0:
        raise ValueError("embedding index must be a unit mod p")
    re = mpf(0)
    im = mpf(0)
    weight = mpf(0)
    for i, c in enumerate(x.coeffs, start=1):
        if not c:
            continue
        cv = mpf(c.numerator) / c.denominator
        angle = mpf(2 * (i * k % p)) / p
        re += cv * mp.cospi(angle)
        im += cv * mp.sinpi(angle)
        weight += abs(cv)
    e = 8 * len(x.coeffs) * weight * ulp(mpf(1))
    return BigComplex(BigReal(re, e), BigReal(im, e))


def _log_plus(r: BigReal) -> BigReal:
    if r.lo > 1:
        return r.log()
    if r.hi <= 1:
        return BigReal(mpf(0))
    top = mp.log(r.hi)
    return BigReal(top / 2, top / 2 + ulp(top))


def _primitive_leading_coefficient(x: CycloElement) -> int:
    """Leading coefficient of the primitive integer characteristic polynomial of x."""
    Y, X = sympy.symbols("Y X")
    f = sum(sympy.Rational(c.numerator, c.denominator) * Y ** (i + 1) for i, c in enumerate(x.coeffs))
    phi = sympy.cyclotomic_poly(x.p, Y)
    char = sympy.Poly(sympy.resultant(phi, X - f, Y), X, domain="QQ")
    _, integral = char.clear_denoms(convert=True)
    _, primitive = integral.primitive()
    return abs(int(primitive.LC()))


def height(x: CycloElement) -> BigReal:
    """Absolute logarithmic height at the current working precision."""
    if x.is_zero():
        raise ValueError("height of 0 is undefined")
    p = x.p
    total = BigReal(mpf(0))
    for k in range(1, p):
        total = total + _log_plus(embed(x, k).abs())
    if not x.is_integral():
        total = total + BigReal.exact(_primitive_leading_coefficient(x)).log()
    return total / (p - 1)


def one_minus_zeta(p: int, k: int = 1) -> CycloElement:
    return CycloElement.from_exponents(p, {0: 1, k: -1})


def zeta_geometric_sum(p: int, a: int) -> CycloElement:
    """(1 - ζ^a)/(1 - ζ) = 1 + ζ + … + ζ^{a-1}."""
    return CycloElement.from_exponents(p, {i: 1 for i in range(a % p)})


@dataclass(frozen=True)
class UnitSystem:
    p: int
    H: tuple[int, ...]
    generator: int
    eta0: CycloElement
    etas: tuple[CycloElement, ...]
    source: str

    @property
    def d(self) -> int:
        return len(self.etas) + 1

    def embedding_exponent(self, index: int) -> int:
        return pow(self.generator, index, self.p)

    def conjugate(self, unit: int, index: int) -> CycloElement:
        x = self.eta0 if unit == 0 else self.etas[unit - 1]
        return galois_apply(self.embedding_exponent(index), x)

    def log_abs(self, unit: int, index: int) -> BigReal:
        x = self.eta0 if unit == 0 else self.etas[unit - 1]
        return embed(x, self.embedding_exponent(index)).abs().log()

    def heights(self) -> tuple[BigReal, ...]:
        return tuple(height(e) for e in self.etas)


def circular_units(ctx: GroupContext) -> tuple[CycloElement, ...]:
    return tuple(
        relative_norm(zeta_geometric_sum(ctx.p, ctx.coset_rep(k)), ctx.H) for k in range(1, ctx.d)
    )


def load_unit_basis(path: Path, ctx: GroupContext) -> tuple[CycloElement, ...]:
    """Read a unit basis file: 'p d', then d-1 lines of p-1 rationals."""
    try:
        lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
        p, d = (int(v) for v in lines[0].split())
    except (OSError, ValueError, IndexError) as exc:
        raise UnitBasisError(f"cannot read unit basis {path}: {exc}") from exc
    if (p, d) != (ctx.p, ctx.d):
        raise UnitBasisError(f"unit basis is for p={p}, d={d}; run needs p={ctx.p}, d={ctx.d}")
    if len(lines) - 1 != d - 1:
        raise UnitBasisError(f"expected {d - 1} units, found {len(lines) - 1}")
    units = []
    for n, line in enumerate(lines[1:], start=2):
        try:
            coeffs = tuple(Fraction(v.strip()) for v in line.split(","))
        except (ValueError, ZeroDivisionError) as exc:
            raise UnitBasisError(f"line {n}: {exc}") from exc
        if len(coeffs) != p - 1:
            raise UnitBasisError(f"line {n}: expected {p - 1} coordinates, got {len(coeffs)}")
        units.append(CycloElement(p, coeffs))
    return tuple(units)


def log_embedding_matrix(units: UnitSystem) -> list[list[BigReal]]:
    """Rows σ_0..σ_{d-1}, columns η_0..η_{d-1}: log|η_ℓ^{σ_k}|."""
    return [[units.log_abs(unit, k) for unit in range(units.d)] for k in range(units.d)]


def verify_unit_system(units: UnitSystem) -> None:
    p = units.p
    if not units.eta0.is_fixed_by(units.H):
        raise UnitBasisError("eta0 is not in the fixed field of H")
    full_norm = relative_norm(units.eta0, [units.embedding_exponent(k) for k in range(units.d)])
    if not full_norm.is_rational() or abs(full_norm.to_rational()) != p:
        raise UnitBasisError(f"norm of eta0 is not ±{p}")
    for k, eta in enumerate(units.etas, start=1):
        if not eta.is_fixed_by(units.H):
            raise UnitBasisError(f"eta{k} is not in the fixed field of H")
        if not eta.is_integral():
            raise UnitBasisError(f"eta{k} is not an algebraic integer")
        norm = relative_norm(eta, [units.embedding_exponent(i) for i in range(units.d)])
        if not norm.is_rational() or abs(norm.to_rational()) != 1:
            raise UnitBasisError(f"eta{k} is not a unit (norm {norm})")
    # regulator-type minor: drop the last embedding and eta0
    minor = mp.matrix(
        [[units.log_abs(u, k).value for u in range(1, units.d)] for k in range(units.d - 1)]
    )
    det = mp.det(minor)
    if abs(det) < mp.ldexp(mpf(1), -mp.prec // 2):
        raise UnitBasisError(f"unit log matrix is singular (det={mp.nstr(det, 5)})")
    for k, h in enumerate(units.heights(), start=1):
        if h.hi < SCHINZEL_BOUND:
            raise UnitBasisError(f"height of eta{k} = {h!r} is below the Schinzel bound")


def build_unit_system(ctx: GroupContext, override: Optional[Path] = None) -> UnitSystem:
    eta0 = relative_norm(one_minus_zeta(ctx.p), ctx.H)
    if override is not None:
        etas, source = load_unit_basis(override, ctx), "external-file"
    else:
        etas, source = circular_units(ctx), "circular"
    units = UnitSystem(ctx.p, ctx.H, ctx.generator, eta0, etas, source)
    verify_unit_system(units)
    log.info("unit system p=%d d=%d source=%s verified", ctx.p, ctx.d, source)
    return units
