import random

import pytest
from mpmath import mp, mpc, mpf

from cartan_points.cm import cm_q
from cartan_points.jfunction import (
    boundary_q,
    evaluate_j,
    invert_j,
    j_coefficients,
    q_sign_for_j,
    region_radius,
    tail_bound,
)
from cartan_points.precision import BigReal


def _oracle(q):
    # real q <-> τ on Re τ ∈ {0, 1/2}
    y = -mp.log(abs(q)) / (2 * mp.pi)
    tau = mpc(0, y) if q > 0 else mpc(mpf(1) / 2, y)
    return (1728 * mp.kleinj(tau)).real


def test_first_coefficients():
    c = j_coefficients(3)
    assert c[:4] == (744, 196884, 21493760, 864299970)


def test_coefficients_positive():
    assert all(c > 0 for c in j_coefficients(60))


def test_special_values():
    assert evaluate_j(BigReal.rounded(mp.exp(-2 * mp.pi))).contains(1728)
    assert evaluate_j(BigReal.rounded(-boundary_q())).contains(0)


@pytest.mark.parametrize("n_terms", [5, 10, 20])
def test_tail_bound_covers_truncation(n_terms):
    rng = random.Random(n_terms)
    for _ in range(6):
        y = mp.sqrt(3) / 2 + 2 * mpf(rng.random())
        q = mp.exp(-2 * mp.pi * y) * (1 if rng.random() < 0.5 else -1)
        value = evaluate_j(BigReal.exact(q), n_terms=n_terms, auto_raise=False)
        assert abs(value.value - _oracle(q)) <= value.err
    assert tail_bound(n_terms) > 0


def test_evaluate_j_is_sharp():
    value = evaluate_j(BigReal.rounded(mpf("-1e-5")))
    assert value.err < mpf(1) / 4
    assert abs(value.value - _oracle(mpf("-1e-5"))) <= value.err


def test_evaluate_j_outside_region():
    with pytest.raises(ValueError):
        evaluate_j(BigReal.rounded(mpf("0.01")))


def test_region_check_has_no_slack():
    just_outside = BigReal.exact(boundary_q() * (1 + mpf(10) ** -9))
    with pytest.raises(ValueError):
        evaluate_j(just_outside)
    assert region_radius(BigReal.exact(boundary_q() / 2)) is None


def test_straddling_enclosure_uses_wider_radius():
    q = BigReal(-boundary_q(), mpf(10) ** -30)
    radius = region_radius(abs(q))
    assert radius >= abs(q).hi
    assert tail_bound(10, radius) >= tail_bound(10)
    assert evaluate_j(q).contains(0)


def test_q_sign():
    assert q_sign_for_j(1728) == 1
    assert q_sign_for_j(10**6) == 1
    assert q_sign_for_j(0) == -1
    assert q_sign_for_j(-3375) == -1
    assert q_sign_for_j(1000) == 0
    with pytest.raises(ValueError):
        invert_j(1000)


@pytest.mark.parametrize("disc, j", [(-11, -32768), (-8, 8000), (-163, -262537412640768000)])
def test_inverse_matches_cm_parameter(disc, j):
    q = invert_j(j)
    assert abs(q.value - cm_q(disc).value) <= q.err + cm_q(disc).err + abs(q.value) * mpf("1e-50")
    assert abs(evaluate_j(q).value - j) < mpf("1e-6")
