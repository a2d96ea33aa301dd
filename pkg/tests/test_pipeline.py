import json
from fractions import Fraction

import pytest
from mpmath import mpf

from cartan_points.cm import cm_points_on_curve
from cartan_points.config import RunConfig
from cartan_points.enumeration import CM_MATCH, INTEGER_J_UNVERIFIED, UNRESOLVED, Candidate, Injection
from cartan_points.pipeline import (
    STATUS_COMPLETE,
    STATUS_INCOMPLETE,
    STATUS_VALIDATED,
    InjectionCheck,
    StageClock,
    _mark_recovered,
    cusp_labels,
    integral_points,
    run_pipeline,
)
from cartan_points.precision import BigReal


def _cand(cusp, b, j, label):
    t = BigReal(mpf("-0.6"), mpf("1e-40"))
    jv = None if j is None else BigReal(mpf(j), mpf("1e-20"))
    return Candidate(cusp, 1, tuple(Fraction(x) for x in b), t, t**11, jv, label)


def test_cusp_labels(ctx11, ctx13):
    assert cusp_labels(ctx11) == [1, 2, 3, 4, 5]
    assert cusp_labels(ctx13) == [1, 2, 3, 4, 5, 6]


def test_stage_clock_accumulates():
    clock = StageClock()
    with clock.stage("slow"):
        pass
    with clock.stage("slow"):
        pass
    assert set(clock.timings) == {"slow"}
    assert clock.timings["slow"] >= 0


def test_integral_points_dedupe(app):
    cands = [
        _cand(1, (3, 1, 0, 0), 0, CM_MATCH),
        _cand(1, (3, 1, 0, 0), 0, CM_MATCH),
        _cand(2, (5, 1, 0, 0), 0, CM_MATCH),
        _cand(2, (7, 1, 0, 0), 1729, INTEGER_J_UNVERIFIED),
        _cand(3, (9, 1, 0, 0), None, UNRESOLVED),
    ]
    points = integral_points(cands, app)
    assert [(pt.j, pt.cusp) for pt in points] == [(0, 1), (0, 2), (1729, 2)]
    assert points[0].disc == -3
    assert points[2].disc is None


def test_mark_recovered():
    q = BigReal(mpf("-1e-3"))
    hit = Injection(2, (), (Fraction(5), Fraction(1)), "truncated")
    lost = Injection(4, (), (Fraction(8), Fraction(0)), "truncated")
    checks = [InjectionCheck(-3, 0, q, [hit, lost])]
    missed = _mark_recovered(checks, [_cand(2, (5, 1), 0, CM_MATCH)])
    assert checks[0].recovered == [2]
    assert len(missed) == 1 and "cusp 4" in missed[0]


@pytest.mark.slow
def test_validate_only_run(app):
    cfg = RunConfig(p=7, validate_only=True, max_bits=app.max_bits)
    report = run_pipeline(cfg, app)
    assert report.status == STATUS_VALIDATED
    assert report.validation.ok
    assert report.cusps == [] and report.small_j is None
    json.dumps(report.as_dict())


@pytest.mark.slow
def test_full_run_p11(app, tmp_path):
    checkpoint = tmp_path / "progress.cpt"
    cfg = RunConfig(p=11, checkpoint_path=checkpoint, max_bits=app.max_bits)
    report = run_pipeline(cfg, app)
    assert report.status in (STATUS_COMPLETE, STATUS_INCOMPLETE)
    assert [c.cusp for c in report.cusps] == [1, 2, 3, 4, 5]
    cm_js = {e.j for e in cm_points_on_curve(11, app.config_dir)}
    assert set(report.j_list()) <= cm_js
    for check in report.injections:
        assert check.recovered == sorted(h.cusp for h in check.hits)
    for outcome in report.cusps:
        assert outcome.slow.accounted == outcome.slow.b1_total
    assert report.small_j.undetermined == []
    assert checkpoint.exists()

    again = run_pipeline(cfg, app)
    assert [c.b_vector for c in again.candidates] == [c.b_vector for c in report.candidates]
    assert all(o.slow.resumed == o.slow.units for o in again.cusps)
    assert again.j_list() == report.j_list()


@pytest.mark.slow
def test_full_run_p13(app):
    report = run_pipeline(RunConfig(p=13, max_bits=app.max_bits), app)
    assert report.group["m"] == 6
    assert set(report.j_list()) <= {e.j for e in cm_points_on_curve(13, app.config_dir)}
    for check in report.injections:
        assert check.recovered == sorted(h.cusp for h in check.hits)
