import random
from fractions import Fraction

import pytest
from mpmath import mp, mpf

from cartan_points.errors import AmbiguousValue, ConfigError, NoSignChange, PrecisionExhausted
from cartan_points.precision import (
    BigComplex,
    BigReal,
    big_max,
    brent_root,
    certify_sign_segments,
    continued_fraction_expand,
    escalate,
    find_roots_of_derivative,
    nearest_integer_distance,
    require_decided,
    to_fraction,
    with_precision,
)


def test_with_precision_rejects_small_bits():
    with pytest.raises(ConfigError):
        with with_precision(32):
            pass


def test_with_precision_restores():
    before = mp.prec
    with with_precision(512):
        assert mp.prec == 512
    assert mp.prec == before


def test_arithmetic_encloses_exact_value():
    third = BigReal.exact(Fraction(1, 3))
    x = third * 3 - 1
    assert x.contains(0)
    assert (BigReal.exact(2).sqrt() ** 2).contains(2)
    assert BigReal.exact(1).exp().log().contains(1)


def test_sign_and_decision():
    assert BigReal(mpf(1), mpf("0.5")).sign() == 1
    assert BigReal(mpf(-1), mpf("0.5")).sign() == -1
    assert BigReal(mpf("0.1"), mpf("0.5")).sign() == 0
    assert BigReal(mpf(0)).sign() == 0
    with pytest.raises(AmbiguousValue):
        require_decided(BigReal(mpf("0.1"), mpf(1)), "x")


def test_definitely_less_and_big_max():
    a = BigReal(mpf(1), mpf("0.1"))
    b = BigReal(mpf(2), mpf("0.1"))
    assert a.definitely_less(b)
    assert not b.definitely_less(a)
    assert big_max([a, b]).contains(2)


def test_to_fraction_is_exact():
    assert to_fraction(mpf("0.5")) == Fraction(1, 2)
    assert to_fraction(mpf(12)) == 12


def test_nearest_integer_distance():
    assert nearest_integer_distance(BigReal.exact(Fraction(9, 4))).contains(Fraction(1, 4))
    assert nearest_integer_distance(BigReal.exact(-3)).contains(0)
    with pytest.raises(PrecisionExhausted):
        nearest_integer_distance(BigReal(mpf(2), mpf("0.3")))


def test_golden_ratio_convergents():
    phi = (BigReal.exact(5).sqrt() + 1) / 2
    cf = continued_fraction_expand(phi, 12)
    assert cf.partial_quotients == (1, 1, 1, 1, 1, 1)
    assert cf.convergents == ((1, 1), (2, 1), (3, 2), (5, 3), (8, 5), (13, 8))
    assert cf.last() == (13, 8)


def test_convergent_limit_is_inclusive():
    phi = (BigReal.exact(5).sqrt() + 1) / 2
    assert continued_fraction_expand(phi, 13).last() == (21, 13)


def test_continued_fraction_needs_precision():
    fuzzy = BigReal(mp.sqrt(2), mpf("1e-3"))
    with pytest.raises(PrecisionExhausted):
        continued_fraction_expand(fuzzy, 10**9)


def test_brent_root_sqrt2():
    root = brent_root(lambda t: BigReal.exact(t) ** 2 - 2, 1, 2, mpf(10) ** -60)
    assert root.contains(mp.sqrt(2))
    assert root.err <= mpf(10) ** -60


def test_brent_root_requires_sign_change():
    with pytest.raises(NoSignChange):
        brent_root(lambda t: BigReal.exact(t) ** 2 + 1, -1, 1, mpf(10) ** -20)


def test_brent_root_tolerance_below_precision():
    with pytest.raises(PrecisionExhausted):
        brent_root(lambda t: BigReal.exact(t) - 1, 0, 2, mp.ldexp(mpf(1), -mp.prec - 10))


def test_derivative_roots_of_cubic():
    roots = find_roots_of_derivative(lambda t: 3 * BigReal.exact(t) ** 2 - 3, -2, 2, mpf(10) ** -40)
    assert len(roots) == 2
    assert roots[0].contains(-1)
    assert roots[1].contains(1)


def test_close_pair_of_roots_is_separated():
    # roots 10^-3 apart: closer than any fixed sampling of a few hundred points
    def f(t):
        return (t - Fraction(1, 2)) * (t - Fraction(501, 1000))

    roots = find_roots_of_derivative(f, 0, 1, mpf(10) ** -20)
    assert len(roots) == 2
    assert roots[0].contains(mpf(1) / 2)
    assert roots[1].contains(mpf(501) / 1000)
    segments = certify_sign_segments(lambda a, b: f(BigReal.spanning(a, b)), 0, 1, mpf(10) ** -20)
    assert [s.sign for s in segments] == [1, 0, -1, 0, 1]
    assert segments[0].lo == 0 and segments[-1].hi == 1
    assert all(a.hi == b.lo for a, b in zip(segments, segments[1:]))


def test_double_root_leaves_an_undecided_cell():
    segments = certify_sign_segments(
        lambda a, b: (BigReal.spanning(a, b) - Fraction(1, 3)) ** 2, 0, 1, mpf(10) ** -15
    )
    assert [s.sign for s in segments] == [1, 0, 1]
    cell = segments[1]
    assert cell.lo <= mpf(1) / 3 <= cell.hi
    assert cell.hi - cell.lo <= 4 * mpf(10) ** -15


def test_sign_segments_give_up_after_budget():
    with pytest.raises(PrecisionExhausted):
        certify_sign_segments(lambda a, b: BigReal(mpf(0), mpf(1)), 0, 1, mpf(10) ** -30, max_evals=50)


def _random_expression(rng, depth, ops):
    if depth == 0 or rng.random() < 0.2:
        return Fraction(rng.randint(1, 40), rng.randint(1, 9)) * rng.choice((1, -1))
    op = rng.choice(ops)
    if op in ("exp", "log", "sqrt", "neg"):
        return (op, _random_expression(rng, depth - 1, ops))
    if op == "pow":
        return (op, _random_expression(rng, depth - 1, ops), rng.randint(0, 4))
    return (op, _random_expression(rng, depth - 1, ops), _random_expression(rng, depth - 1, ops))


def _evaluate_real(node):
    if isinstance(node, Fraction):
        return BigReal.exact(node)
    op, *args = node
    x = _evaluate_real(args[0])
    if op == "neg":
        return -x
    if op == "exp":
        return (x / (1 + x * x)).exp()
    if op == "log":
        return abs(x).log()
    if op == "sqrt":
        return abs(x).sqrt()
    if op == "pow":
        return x ** args[1]
    y = _evaluate_real(args[1])
    if op == "+":
        return x + y
    if op == "-":
        return x - y
    if op == "*":
        return x * y
    return x / y


def _evaluate_complex(node):
    if isinstance(node, Fraction):
        return BigComplex.exact(node, node / 3)
    op, *args = node
    z = _evaluate_complex(args[0])
    if op == "neg":
        return -z
    if op == "exp":
        return (z * Fraction(1, 8)).exp()
    if op == "log":
        return z.log()
    if op == "pow":
        return z ** args[1]
    w = _evaluate_complex(args[1])
    if op == "+":
        return z + w
    if op == "-":
        return z - w
    return z * w


def _agrees(coarse, fine):
    gap = abs(mp.fsub(coarse.value, fine.value, exact=True))
    return gap <= mp.fadd(coarse.err, fine.err, exact=True)


@pytest.mark.parametrize("bits", [64, 128])
def test_real_enclosures_hold_against_higher_precision(bits):
    rng = random.Random(bits)
    ops = ("+", "-", "*", "/", "exp", "log", "sqrt", "pow", "neg")
    checked = 0
    for _ in range(300):
        node = _random_expression(rng, 4, ops)
        try:
            with with_precision(bits):
                coarse = _evaluate_real(node)
            with with_precision(4 * bits):
                fine = _evaluate_real(node)
        except PrecisionExhausted:
            continue
        assert _agrees(coarse, fine), node
        checked += 1
    assert checked >= 100


@pytest.mark.parametrize("bits", [64, 128])
def test_complex_enclosures_hold_against_higher_precision(bits):
    rng = random.Random(bits + 1)
    ops = ("+", "-", "*", "exp", "log", "pow", "neg")
    checked = 0
    for _ in range(200):
        node = _random_expression(rng, 3, ops)
        try:
            with with_precision(bits):
                coarse = _evaluate_complex(node)
            with with_precision(4 * bits):
                fine = _evaluate_complex(node)
        except PrecisionExhausted:
            continue
        assert _agrees(coarse.re, fine.re), node
        assert _agrees(coarse.im, fine.im), node
        checked += 1
    assert checked >= 60




def test_escalate_doubles_until_success():
    seen = []

    def fn(bits):
        seen.append(bits)
        if bits < 512:
            raise PrecisionExhausted("not yet", bits=bits)
        return bits

    assert escalate(fn, 128, ceiling=4096) == 512
    assert seen == [128, 256, 512]


def test_escalate_gives_up_at_ceiling():
    def fn(bits):
        raise PrecisionExhausted("never", bits=bits)

    with pytest.raises(PrecisionExhausted):
        escalate(fn, 128, ceiling=512)
