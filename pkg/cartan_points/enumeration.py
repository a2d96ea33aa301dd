from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

from mpmath import mp, mpf

from .errors import AmbiguousValue, CartanError, NoSignChange, PrecisionExhausted
from .jfunction import evaluate_j
from .precision import BigReal, SignSegment, big_max, brent_root, certify_sign_segments, with_precision
from .relation import CuspFrame, bk_from_q

log = logging.getLogger("cartan.enumeration")

CM_MATCH = "cm-match"
INTEGER_J_UNVERIFIED = "integer-j-unverified"
REJECTED = "rejected"
UNRESOLVED = "unresolved"

EPSILON_TARGET = mpf(10) ** -10
DEFAULT_CHUNK = 64


# (1/I)ℤ membership


def lattice_points(lo: mpf, hi: mpf, index: int = 1) -> range:
    return range(int(mp.ceil(lo * index)), int(mp.floor(hi * index)) + 1)


def contains_lattice_point(lo: mpf, hi: mpf, index: int = 1) -> bool:
    return len(lattice_points(lo, hi, index)) > 0


def nearest_lattice_point(x: mpf, index: int = 1) -> Fraction:
    return Fraction(int(mp.nint(x * index)), index)


def choose_nu(Theta: BigReal, p: int, target: mpf = EPSILON_TARGET, limit: int = 4096) -> int:
    """Smallest ν with Θ(2.2ν/p + 3.1)e^{-(ν+1)π√3/p} <= target."""
    r = mp.exp(-mp.pi * mp.sqrt(3) / p)
    for nu in range(1, limit + 1):
        if Theta.hi * (mpf("2.2") * nu / p + mpf("3.1")) * r ** (nu + 1) <= target:
            return nu
    raise ValueError(f"no nu <= {limit} reaches {mp.nstr(target, 3)}")


# domain


@dataclass(frozen=True)
class EnumDomain:
    cusp: int
    t_intervals: tuple[tuple[mpf, mpf], ...]
    Upsilon: BigReal


def build_domain(frame: CuspFrame, Upsilon: BigReal) -> EnumDomain:
    """[-e^{-π√3/p}, -e^{-Υ/p}] ∪ [e^{-Υ/p}, e^{-2π/p}] in t = q_c^{1/p}."""
    p = frame.p
    inner = mp.exp(-Upsilon.hi / p)
    intervals = []
    neg_edge = mp.exp(-mp.pi * mp.sqrt(3) / p)
    pos_edge = mp.exp(-2 * mp.pi / p)
    if inner < neg_edge:
        intervals.append((-neg_edge, -inner))
    if inner < pos_edge:
        intervals.append((inner, pos_edge))
    return EnumDomain(frame.cusp, tuple(intervals), Upsilon)


# candidates


@dataclass(frozen=True)
class Candidate:
    cusp: int
    pivot: int
    b_vector: tuple[Fraction, ...]
    t: BigReal
    q_c: BigReal
    j: Optional[BigReal]
    classification: Optional[str]
    stage: str = "slow"

    @property
    def b1(self) -> Fraction:
        return self.b_vector[self.pivot - 1]

    def sort_key(self) -> tuple[int, Fraction]:
        return (self.cusp, self.b1)


def classify_candidate(j: BigReal, cm_values: Iterable[int]) -> str:
    if j.err >= mpf(1) / 2:
        raise AmbiguousValue(f"j = {j!r} is not determined to within 1/2")
    n = int(mp.nint(j.value))
    if not j.contains(n):
        return REJECTED
    return CM_MATCH if n in set(cm_values) else INTEGER_J_UNVERIFIED


# quick phase


@dataclass(frozen=True)
class QuickResult:
    cusp: int
    Upsilon: BigReal
    initial: BigReal
    epsilon: BigReal
    scanned: int
    halted_at: Optional[Fraction]


def initial_upsilon(frame: CuspFrame) -> BigReal:
    """max(p·log(50Θ/|δ₁|), p·log 2)."""
    d1 = abs(frame.delta[frame.pivot])
    start = (frame.Theta * 50 / d1).log() * frame.p
    return big_max([start, BigReal.exact(2).log() * frame.p])


def _quick_survives(frame: CuspFrame, ell1: BigReal, eps: BigReal, index: int) -> bool:
    p, k1 = frame.p, frame.pivot
    d1 = abs(frame.delta[k1])
    eps1 = frame.Theta * BigReal.exact(Fraction(16, 5)) * ((eps - ell1) / p).exp()
    for k in range(1, frame.d):
        if k == k1:
            continue
        center = frame.delta[k] * ell1 + frame.theta[k]
        half = (abs(frame.delta[k]) / d1 + 1) * eps1
        if not contains_lattice_point(center.lo - half.hi, center.hi + half.hi, index):
            return False
    return True


def quick_enumerate(frame: CuspFrame, Xi_hat: BigReal, index: int = 1) -> QuickResult:
    """Scan b₁ downwards from ℓ₁ = Ξ̂; Υ drops to the first b₁ whose intervals all meet (1/I)ℤ."""
    p, k1 = frame.p, frame.pivot
    d1, t1 = frame.delta[k1], frame.theta[k1]
    start = initial_upsilon(frame)
    eps = frame.Theta * BigReal.exact(Fraction(16, 5)) * (-start / p).exp() / abs(d1)
    if not start.definitely_less(Xi_hat):
        log.info("cusp %d: Xi_hat %s below quick floor %s", frame.cusp, mp.nstr(Xi_hat.value, 8), mp.nstr(start.value, 8))
        return QuickResult(frame.cusp, BigReal(big_max([Xi_hat, start]).hi), start, eps, 0, None)

    # ℓ₁ = (b₁ - ϑ₁)/δ₁ ∈ [Υ - ε, Ξ̂ + ε]
    ends = [d1 * (start - eps) + t1, d1 * (Xi_hat + eps) + t1]
    lo = min(e.lo for e in ends)
    hi = max(e.hi for e in ends)
    numerators = list(lattice_points(lo, hi, index))
    # descending ℓ₁
    numerators.sort(reverse=d1.value > 0)
    scanned = 0
    for n in numerators:
        b1 = Fraction(n, index)
        ell1 = (BigReal.exact(b1) - t1) / d1
        scanned += 1
        if _quick_survives(frame, ell1, eps, index):
            Upsilon = BigReal((ell1 + eps).hi)
            Upsilon = big_max([Upsilon, start])
            log.info(
                "cusp %d: quick phase halts at b1=%s after %d values, Upsilon=%s",
                frame.cusp, b1, scanned, mp.nstr(Upsilon.value, 10),
            )
            return QuickResult(frame.cusp, BigReal(Upsilon.hi), start, eps, scanned, b1)
    log.info("cusp %d: quick phase cleared %d values, Upsilon=%s", frame.cusp, scanned, mp.nstr(start.value, 10))
    return QuickResult(frame.cusp, BigReal(start.hi), start, eps, scanned, None)


# slow phase


@dataclass(frozen=True)
class MonotonePiece:
    cusp: int
    index: int
    lo: mpf
    hi: mpf
    increasing: bool
    epsilon: mpf
    monotone: bool = True
    slack: mpf = mpf(0)


@dataclass(frozen=True)
class WorkUnit:
    cusp: int
    piece: MonotonePiece
    start: int
    stop: int

    @property
    def key(self) -> str:
        return f"c{self.cusp}:i{self.piece.index}:b{self.start}"


@dataclass
class UnitResult:
    key: str
    cusp: int
    b1_range: tuple[int, int]
    pruned: dict[str, int] = field(default_factory=dict)
    candidates: list[Candidate] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def accounted(self) -> int:
        return sum(self.pruned.values()) + len(self.candidates) + len(self.failures)


def _tolerance() -> mpf:
    return mp.ldexp(mpf(1), -(mp.prec // 2))


def _sign_segments(frame: CuspFrame, k: int, lo: mpf, hi: mpf, tol: mpf) -> list[SignSegment]:
    return certify_sign_segments(lambda a, b: frame.derivative_enclosure(k, a, b), lo, hi, tol)


def monotone_pieces(frame: CuspFrame, domain: EnumDomain) -> list[MonotonePiece]:
    """Tile the domain by stretches where the sign of f₁′ is certified.

    Cells narrower than the tolerance where f₁′ may vanish become pieces with
    ``monotone=False``; f₁ moves by at most ``slack`` across them.
    """
    k1 = frame.pivot
    pieces: list[MonotonePiece] = []
    for lo, hi in domain.t_intervals:
        for seg in _sign_segments(frame, k1, lo, hi, _tolerance()):
            eps = frame.truncation_bound(max(abs(seg.lo), abs(seg.hi)))
            if seg.sign:
                piece = MonotonePiece(frame.cusp, len(pieces), seg.lo, seg.hi, seg.sign > 0, eps)
            else:
                slack = seg.magnitude * (seg.hi - seg.lo)
                piece = MonotonePiece(frame.cusp, len(pieces), seg.lo, seg.hi, True, eps, False, slack)
                log.debug("cusp %d: f1' may vanish on [%s, %s]", frame.cusp, mp.nstr(seg.lo, 15), mp.nstr(seg.hi, 15))
            pieces.append(piece)
    return pieces


def _piece_range(frame: CuspFrame, piece: MonotonePiece, index: int) -> range:
    k1 = frame.pivot
    fa = frame.evaluate(piece.lo)[k1]
    fb = frame.evaluate(piece.hi)[k1]
    pad = piece.epsilon + piece.slack
    return lattice_points(min(fa.lo, fb.lo) - pad, max(fa.hi, fb.hi) + pad, index)


def plan_work_units(
    frame: CuspFrame,
    domain: EnumDomain,
    index: int = 1,
    chunk: int = DEFAULT_CHUNK,
    only_b1: Optional[Sequence[Fraction]] = None,
) -> list[WorkUnit]:
    """Work units of ``chunk`` consecutive b₁ numerators, deepest |t| first within each piece."""
    units: list[WorkUnit] = []
    wanted = None if only_b1 is None else {int(b * index) for b in only_b1}
    for piece in monotone_pieces(frame, domain):
        numerators = _piece_range(frame, piece, index)
        if not len(numerators):
            continue
        starts = list(range(numerators.start, numerators.stop, chunk))
        # f₁ ~ -pδ₁ log|t|: the deep end of the piece sits where |t| is smallest
        deep_high = (abs(piece.lo) < abs(piece.hi)) != piece.increasing
        if deep_high:
            starts.reverse()
        for s in starts:
            stop = min(s + chunk, numerators.stop)
            if wanted is not None and not any(s <= n < stop for n in wanted):
                continue
            units.append(WorkUnit(frame.cusp, piece, s, stop))
    return units


def _level(frame: CuspFrame, piece: MonotonePiece, y: mpf, upper: bool) -> Optional[mpf]:
    """Outer bound of {t : G(t) <= y} (upper) or {t : G(t) >= y} (lower), G increasing along the piece."""
    k1 = frame.pivot
    sgn = 1 if piece.increasing else -1
    a, b = piece.lo, piece.hi

    def g(t: mpf) -> BigReal:
        return frame.evaluate(t)[k1] * sgn - y

    ga, gb = g(a), g(b)
    if not upper:
        if ga.sign() >= 0:
            return a
        if gb.sign() < 0:
            return None
        if gb.sign() == 0:
            return _walk_inward(g, b, a, want=-1)
    else:
        if gb.sign() <= 0:
            return b
        if ga.sign() > 0:
            return None
        if ga.sign() == 0:
            return _walk_inward(g, a, b, want=1)
    root = brent_root(g, a, b, _tolerance())
    return max(root.lo, a) if not upper else min(root.hi, b)


def _walk_inward(g: Callable[[mpf], BigReal], start: mpf, other: mpf, want: int) -> mpf:
    width = other - start
    for k in range(40, 0, -1):
        t = start + width * mp.ldexp(mpf(1), -k)
        if g(t).sign() == want:
            return t
    return other


def _hull(frame: CuspFrame, piece: MonotonePiece, b1: Fraction, eps: mpf) -> Optional[tuple[mpf, mpf]]:
    """Enclosure of {t in piece : |f₁(t) - b₁| <= eps}, None when empty."""
    target = mpf(b1.numerator) / b1.denominator
    if not piece.monotone:
        f = frame.evaluate(piece.lo)[frame.pivot]
        pad = eps + piece.slack
        if f.lo - pad <= target <= f.hi + pad:
            return piece.lo, piece.hi
        return None
    # G = ±f₁ is increasing, so the set is {sgn·b₁ - eps <= G <= sgn·b₁ + eps}
    sgn = 1 if piece.increasing else -1
    left = _level(frame, piece, sgn * target - eps, upper=False)
    right = _level(frame, piece, sgn * target + eps, upper=True)
    if left is None or right is None or left > right:
        return None
    return left, right


def _range_on(frame: CuspFrame, k: int, a: mpf, b: mpf, fa: BigReal, fb: BigReal) -> tuple[mpf, mpf, bool]:
    """Enclosure of f_k on [a, b]; the flag is set when f_k′ may vanish inside."""
    lo, hi = min(fa.lo, fb.lo), max(fa.hi, fb.hi)
    if b <= a:
        return lo, hi, False
    tol = max(_tolerance(), (b - a) * mpf(10) ** -6)
    cells = [s for s in _sign_segments(frame, k, a, b, tol) if s.sign == 0]
    # f_k is monotone between cells, so its extremes sit at a, b or inside a cell
    for cell in cells:
        v = frame.evaluate(cell.lo)[k]
        pad = cell.magnitude * (cell.hi - cell.lo)
        lo = min(lo, v.lo - pad)
        hi = max(hi, v.hi + pad)
    return lo, hi, bool(cells)


def _intervals_pass(
    frame: CuspFrame, hull: tuple[mpf, mpf], eps: mpf, index: int, warnings: list[str]
) -> Optional[list[Fraction]]:
    a, b = hull
    va, vb = frame.evaluate(a), frame.evaluate(b)
    picks: list[Fraction] = []
    for k in range(1, frame.d):
        if k == frame.pivot:
            continue
        lo, hi, widened = _range_on(frame, k, a, b, va[k], vb[k])
        if widened:
            warnings.append(f"f{k}' may vanish on [{mp.nstr(a, 12)}, {mp.nstr(b, 12)}]; interval widened")
            log.warning("cusp %d: %s", frame.cusp, warnings[-1])
        if not contains_lattice_point(lo - eps, hi + eps, index):
            return None
        picks.append(nearest_lattice_point((lo + hi) / 2, index))
    return picks


def _assemble(frame: CuspFrame, b1: Fraction, others: list[Fraction]) -> tuple[Fraction, ...]:
    it = iter(others)
    return tuple(b1 if k == frame.pivot else next(it) for k in range(1, frame.d))


def examine_b1(
    frame: CuspFrame, piece: MonotonePiece, b1: Fraction, index: int = 1
) -> tuple[str, Optional[Candidate], list[str]]:
    """Outcome for one b₁: "empty", "interval", "refine" (pruned at that stage) or "candidate"."""
    warnings: list[str] = []
    eps = piece.epsilon
    hull = _hull(frame, piece, b1, eps)
    if hull is None:
        return "empty", None, warnings
    picks = _intervals_pass(frame, hull, eps, index, warnings)
    if picks is None:
        return "interval", None, warnings
    # refine ε with the actual |τ|
    eps1 = frame.truncation_bound(max(abs(hull[0]), abs(hull[1])))
    if eps1 < eps:
        refined = _hull(frame, piece, b1, eps1)
        if refined is None:
            return "refine", None, warnings
        picks = _intervals_pass(frame, refined, eps1, index, warnings)
        if picks is None:
            return "refine", None, warnings
        hull = refined
    a, b = hull
    t = BigReal((a + b) / 2, (b - a) / 2)
    q = t ** frame.p
    cand = Candidate(frame.cusp, frame.pivot, _assemble(frame, b1, picks), t, q, None, None)
    return "candidate", cand, warnings


def run_work_unit(frame: CuspFrame, unit: WorkUnit, index: int = 1) -> UnitResult:
    with with_precision(frame.bits):
        result = UnitResult(unit.key, unit.cusp, (unit.start, unit.stop))
        numerators = range(unit.start, unit.stop)
        for n in numerators:
            b1 = Fraction(n, index)
            try:
                outcome, cand, warnings = examine_b1(frame, unit.piece, b1, index)
            except (PrecisionExhausted, NoSignChange) as exc:
                result.failures.append((str(b1), str(exc)))
                log.warning("cusp %d b1=%s: %s", unit.cusp, b1, exc)
                continue
            result.warnings.extend(warnings)
            if cand is not None:
                result.candidates.append(cand)
                log.debug("cusp %d b1=%s survives", unit.cusp, b1)
            else:
                result.pruned[outcome] = result.pruned.get(outcome, 0) + 1
        return result


def slow_enumerate(
    frame: CuspFrame, domain: EnumDomain, nu: Optional[int] = None, index: int = 1, chunk: int = DEFAULT_CHUNK
) -> list[Candidate]:
    if nu is not None and nu != frame.nu:
        raise ValueError(f"frame carries nu={frame.nu}, asked for {nu}")
    with with_precision(frame.bits):
        units = plan_work_units(frame, domain, index, chunk)
    found: list[Candidate] = []
    for unit in units:
        found.extend(run_work_unit(frame, unit, index).candidates)
    return sorted(found, key=Candidate.sort_key)


# candidate resolution


def resolve_candidate(frame: CuspFrame, cand: Candidate, cm_values: Iterable[int]) -> Candidate:
    """Pin t by solving f₁(t) = b₁ on a sharper frame, then evaluate and classify j."""
    with with_precision(frame.bits):
        a, b = cand.t.lo, cand.t.hi
        eps = frame.truncation_bound(max(abs(a), abs(b)))
        segments = _sign_segments(frame, frame.pivot, a, b, _tolerance())
        if len(segments) == 1 and segments[0].sign:
            piece = MonotonePiece(cand.cusp, -1, a, b, segments[0].sign > 0, eps)
        else:
            slack = max(s.magnitude for s in segments) * (b - a)
            piece = MonotonePiece(cand.cusp, -1, a, b, True, eps, False, slack)
        hull = _hull(frame, piece, cand.b1, eps)
        if hull is None:
            return replace(cand, classification=REJECTED, stage="resolve")
        lo, hi = hull
        t = BigReal((lo + hi) / 2, (hi - lo) / 2)
        q = t ** frame.p
        j = evaluate_j(q)
        label = classify_candidate(j, cm_values)
        log.info("cusp %d b=%s: j=%s -> %s", cand.cusp, [str(x) for x in cand.b_vector], mp.nstr(j.value, 25), label)
        return replace(cand, t=t, q_c=q, j=j, classification=label, stage="resolve")


# injection


@dataclass(frozen=True)
class Injection:
    cusp: int
    b_estimates: tuple[BigReal, ...]
    b_vector: tuple[Fraction, ...]
    mode: str


def inject_point(frames: Sequence[CuspFrame], q: BigReal, index: int = 1) -> list[Injection]:
    """Cusps at which a real q-parameter gives b-estimates meeting (1/I)ℤ for every k >= 1."""
    hits = []
    for frame in frames:
        with with_precision(frame.bits):
            est = None
            for mode in ("truncated", "full-log"):
                try:
                    est = bk_from_q(frame, q, mode)
                except ValueError:
                    continue
                break
            if est is None:
                raise CartanError(f"q = {q!r} cannot be evaluated at cusp {frame.cusp}")
            if all(contains_lattice_point(e.lo, e.hi, index) for e in est[1:]):
                vec = tuple(nearest_lattice_point(e.value, index) for e in est[1:])
                hits.append(Injection(frame.cusp, tuple(est), vec, mode))
    return hits


