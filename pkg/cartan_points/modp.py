from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd
from typing import Iterator, Optional, Union

from sympy import isprime, legendre_symbol, primitive_root

from .errors import ConfigError

log = logging.getLogger("cartan.modp")

Point = tuple[int, int]
Matrix = tuple[tuple[int, int], tuple[int, int]]

IDENTITY: Matrix = ((1, 0), (0, 1))


@dataclass(frozen=True)
class GroupContext:

    p: int
    xi: int
    H: tuple[int, ...]
    d: int
    m: int
    generator: int
    subgroup_label: str
    coset_of: tuple[int, ...] = field(repr=False)

    @property
    def h_order(self) -> int:
        return len(self.H)

    def coset_rep(self, index: int) -> int:
        """r^index mod p, the representative of the index-th coset of H."""
        return pow(self.generator, index % self.d, self.p)

    def coset_index(self, t: int) -> int:
        t %= self.p
        if t == 0:
            raise ValueError("0 is not in F_p^×")
        return self.coset_of[t]

    def norm(self, x: int, y: int) -> int:
        return (x * x - self.xi * y * y) % self.p

    def unit_form(self, x: int, y: int) -> int:
        return (self.xi * x * x - y * y) % self.p


@dataclass(frozen=True)
class Orbit:
    kind: str
    label: int
    index: int
    members: tuple[Point, ...]

    @property
    def is_infinity(self) -> bool:
        return self.kind == "cusp" and self.label == 1

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class CuspClass:
    label: int
    index: int
    cusps: tuple[int, ...]


@dataclass(frozen=True)
class LiftedPoint:
    a: Point
    tilde: tuple[Fraction, Fraction]


def _smallest_non_residue(p: int) -> int:
    for x in range(2, p):
        if legendre_symbol(x, p) == -1:
            return x
    raise ConfigError(f"no quadratic non-residue mod {p}")


def _subgroup(p: int, h_spec: Union[str, int, None]) -> tuple[tuple[int, ...], str]:
    if h_spec is None or str(h_spec).lower() in ("pm1", "±1", "+-1"):
        return (1, p - 1), "pm1"
    try:
        h = int(h_spec) % p
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"subgroup must be 'pm1' or an integer generator, got {h_spec!r}") from exc
    if h == 0:
        raise ConfigError("subgroup generator must be a unit mod p")
    elems = {1}
    x = h
    while x != 1:
        elems.add(x)
        x = x * h % p
    if p - 1 not in elems:
        raise ConfigError(f"subgroup <{h}> mod {p} does not contain -1")
    return tuple(sorted(elems)), str(h)


def build_group_context(p: int, h_spec: Union[str, int, None] = "pm1") -> GroupContext:
    if p < 7 or not isprime(p):
        raise ConfigError(f"p must be a prime >= 7, got {p}")
    H, label = _subgroup(p, h_spec)
    d = (p - 1) // len(H)
    if d < 3:
        raise ConfigError(f"index d = {d} of H in F_{p}^× must be at least 3")
    xi = p - 1 if p % 4 == 3 else _smallest_non_residue(p)
    m = 2 if ((p + 1) * len(H)) % 3 == 0 else 6
    r = int(primitive_root(p))
    coset_of = [-1] * p
    for index in range(d):
        rep = pow(r, index, p)
        for h in H:
            coset_of[rep * h % p] = index
    ctx = GroupContext(
        p=p, xi=xi, H=H, d=d, m=m, generator=r, subgroup_label=label, coset_of=tuple(coset_of)
    )
    log.debug("group context p=%d H=%s d=%d m=%d xi=%d r=%d", p, label, d, m, xi, r)
    return ctx


def nonzero_points(p: int) -> Iterator[Point]:
    for x in range(p):
        for y in range(p):
            if x or y:
                yield (x, y)


def cusp_orbits(ctx: GroupContext) -> list[Orbit]:
    """Orbits of the left G₁-action: {x² - Ξy² = ±c}, c = 1, …, (p-1)/2."""
    p = ctx.p
    buckets: dict[int, list[Point]] = {c: [] for c in range(1, (p - 1) // 2 + 1)}
    for x, y in nonzero_points(p):
        n = ctx.norm(x, y)
        buckets[min(n, p - n)].append((x, y))
    return [Orbit("cusp", c, c - 1, tuple(pts)) for c, pts in buckets.items()]


def h_cusp_orbits(ctx: GroupContext) -> list[CuspClass]:
    classes: dict[int, list[int]] = {i: [] for i in range(ctx.d)}
    for c in range(1, (ctx.p - 1) // 2 + 1):
        classes[ctx.coset_index(c)].append(c)
    return [CuspClass(ctx.coset_rep(i), i, tuple(cs)) for i, cs in classes.items()]


def unit_orbits(ctx: GroupContext) -> list[Orbit]:
    """Orbits of the right G_H-action: {Ξx² - y² ∈ r^ℓ H}, ℓ = 0, …, d-1."""
    buckets: dict[int, list[Point]] = {i: [] for i in range(ctx.d)}
    for x, y in nonzero_points(ctx.p):
        buckets[ctx.coset_index(ctx.unit_form(x, y))].append((x, y))
    return [Orbit("unit", ctx.coset_rep(i), i, tuple(pts)) for i, pts in buckets.items()]


def act_right(a: Point, g: Matrix, p: int) -> Point:
    (g11, g12), (g21, g22) = g
    x, y = a
    return ((x * g11 + y * g21) % p, (x * g12 + y * g22) % p)


def act_left(g: Matrix, a: Point, p: int) -> Point:
    (g11, g12), (g21, g22) = g
    x, y = a
    return ((g11 * x + g12 * y) % p, (g21 * x + g22 * y) % p)


def det(g: Matrix) -> int:
    return g[0][0] * g[1][1] - g[0][1] * g[1][0]


def cartan_element(ctx: GroupContext, alpha: int, beta: int, flip: bool = False) -> Matrix:
    p = ctx.p
    if flip:
        return ((alpha % p, ctx.xi * beta % p), (-beta % p, -alpha % p))
    return ((alpha % p, ctx.xi * beta % p), (beta % p, alpha % p))


def normalizer_elements(ctx: GroupContext, determinants: Optional[set[int]] = None) -> Iterator[Matrix]:
    for alpha in range(ctx.p):
        for beta in range(ctx.p):
            if not (alpha or beta):
                continue
            for flip in (False, True):
                g = cartan_element(ctx, alpha, beta, flip)
                if determinants is None or det(g) % ctx.p in determinants:
                    yield g


def element_of_norm(ctx: GroupContext, t: int) -> tuple[int, int]:
    """Lexicographically smallest (a, b) with a² - Ξb² = t."""
    t %= ctx.p
    for a in range(ctx.p):
        for b in range(ctx.p):
            if ctx.norm(a, b) == t:
                return a, b
    raise ValueError(f"norm {t} not attained mod {ctx.p}")


def galois_matrix(ctx: GroupContext, t: int) -> Matrix:
    """An element of G with determinant t; acts on unit orbits as ζ ↦ ζ^t."""
    alpha, beta = element_of_norm(ctx, t)
    return cartan_element(ctx, alpha, beta)


def _lift_sl2(target: Matrix, p: int) -> Matrix:
    (A, B), (C, D) = target
    c0 = C % p or p
    d0 = D % p
    while gcd(c0, d0) != 1:
        d0 += p
    # x·d0 - y·c0 = 1
    _, u, v = _ext_gcd(d0, c0)
    x, y = u, -v
    if C % p:
        lam = (A - x) * pow(C, -1, p) % p
    else:
        lam = (B - y) * pow(D, -1, p) % p
    return ((x + lam * c0, y + lam * d0), (c0, d0))


def _ext_gcd(a: int, b: int) -> tuple[int, int, int]:
    if b == 0:
        return a, 1, 0
    g, x, y = _ext_gcd(b, a % b)
    return g, y, x - (a // b) * y


def sigma_c(ctx: GroupContext, c: int) -> Matrix:
    """SL₂(ℤ) lift of (ca, bΞ; cb, a) with a² - Ξb² = c⁻¹; σ₁ = I."""
    p = ctx.p
    c %= p
    if c == 0:
        raise ValueError("cusp label must be a unit mod p")
    if c in (1, p - 1):
        return IDENTITY
    a, b = element_of_norm(ctx, pow(c, -1, p))
    target = ((c * a % p, b * ctx.xi % p), (c * b % p, a))
    return _lift_sl2(target, p)


def reduce_matrix(g: Matrix, p: int) -> Matrix:
    return tuple(tuple(v % p for v in row) for row in g)  # type: ignore[return-value]


def lift(a: Point, p: int, shift: int = 0) -> LiftedPoint:
    """Conjugation-respecting lift of a ∈ M_p with 0 <= ã₁ < 1.

    Second coordinates 1..(p-1)/2 lift to a₂/p + shift, their negatives to the
    negated value; ``shift`` produces an alternative valid lifting.
    """
    a1, a2 = a[0] % p, a[1] % p
    if not (a1 or a2):
        raise ValueError("(0, 0) has no Siegel function")
    t1 = Fraction(a1, p)
    if a2 == 0:
        t2 = Fraction(0)
    elif 2 * a2 < p:
        t2 = Fraction(a2, p) + shift
    else:
        t2 = -Fraction(p - a2, p) - shift
    return LiftedPoint((a1, a2), (t1, t2))
