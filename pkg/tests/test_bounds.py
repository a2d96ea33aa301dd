from fractions import Fraction

import pytest
from mpmath import mp, mpf

from cartan_points import bounds
from cartan_points.bounds import (
    baker_B0,
    clamp_value,
    davenport_reduce,
    default_companion,
    matveev_C,
    reduction_bits,
)
from cartan_points.cm import cm_points_on_curve, cm_q
from cartan_points.config import RunConfig
from cartan_points.enumeration import inject_point
from cartan_points.errors import ReductionStalled
from cartan_points.pipeline import bound_cusp
from cartan_points.precision import BigReal


def test_matveev_constants():
    assert matveev_C(1).contains(1_200_000)
    assert abs(matveev_C(2).value - mpf("1.6292e9")) < mpf("1e6")
    with pytest.raises(ValueError):
        matveev_C(0)


def test_baker_bound(ctx11, units11, frame11):
    ledger = baker_B0(ctx11, units11, frame11)
    assert ledger.cusp == frame11.cusp
    assert ledger.mho2.value > ledger.mho1.value > 0
    expected = 2 * ledger.mho1.value * mp.log(ledger.mho1.value) + 2 * ledger.mho2.value
    assert ledger.B0.contains(expected)
    assert ledger.matveev.contains(matveev_C(5))
    assert ledger.Xi_hat is None and ledger.steps == ()


def test_reduction_bits_formula():
    B = BigReal.exact(10**40)
    expected = 64 + 2 * int(mp.ceil(mp.log(10 * mpf(10) ** 80, 2)))
    assert reduction_bits(B, 10) == expected


def test_clamp_and_companion(frame11):
    clamp = clamp_value(frame11)
    assert clamp.value >= 11 * mp.log(2) - mpf("1e-30")
    k2 = default_companion(frame11)
    assert k2 not in (0, frame11.pivot)


@pytest.mark.slow
def test_reduction_p11(ctx11, units11, frames11, app):
    cfg = RunConfig(p=11, companion_check=False)
    _, frames = frames11
    for frame in frames:
        ledger, bits = bound_cusp(ctx11, units11, frame, cfg)
        chain = ledger.reduction
        assert bits >= reduction_bits(ledger.B0, 10)
        assert ledger.B0.value >= mpf(10) ** 30
        assert 1 <= len(chain.steps) <= 6
        assert mpf(300) <= chain.Xi_hat.value <= mpf(10) ** 4
        assert chain.Xi_hat.value >= chain.clamp.value
        xis = [s.Xi.value for s in chain.steps]
        assert xis == sorted(xis, reverse=True)
        # CM points integral at this cusp stay inside the bound
        for entry in cm_points_on_curve(11, app.config_dir):
            q = cm_q(entry.disc)
            if any(h.cusp == frame.cusp for h in inject_point([frame], q)):
                assert -abs(q).log().value <= chain.Xi_hat.value


def _never_good_enough(monkeypatch):
    # ‖rλ‖ = 0 means no T passes the 2/T test
    monkeypatch.setattr(bounds, "nearest_integer_distance", lambda x: BigReal(mpf(0)))


def test_reduction_stall_falls_back_to_current_bound(frame11, monkeypatch):
    _never_good_enough(monkeypatch)
    B = BigReal.exact(10**8)
    chain = davenport_reduce(frame11, B, 10)
    assert chain.stalled and chain.steps == ()
    d1, t1 = frame11.delta[frame11.pivot], frame11.theta[frame11.pivot]
    implied = (B + abs(t1) + BigReal.exact(Fraction(16, 5))) / abs(d1)
    assert chain.Xi_hat.value >= implied.lo
    assert chain.Xi_hat.value >= chain.clamp.value
    with pytest.raises(ReductionStalled):
        davenport_reduce(frame11, B, 10, fallback=False)


@pytest.mark.slow
def test_bound_cusp_survives_a_stalled_reduction(ctx11, units11, frame11, monkeypatch, caplog):
    _never_good_enough(monkeypatch)
    ledger, _ = bound_cusp(ctx11, units11, frame11, RunConfig(p=11, companion_check=False))
    assert ledger.reduction.stalled and ledger.reduction.steps == ()
    assert ledger.reduction.Xi_hat.value > 0
    assert any("stalled before the first step" in note for note in ledger.notes)
    assert "falls back to B0" in caplog.text
