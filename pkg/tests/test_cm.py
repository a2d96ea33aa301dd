import pytest
from mpmath import mp

from cartan_points.cm import cm_j_values, cm_points_on_curve, cm_q, cm_tau, on_curve
from cartan_points.settings import CMEntry, load_cm_table


def test_table_has_thirteen_entries(config_dir):
    table = load_cm_table(config_dir)
    assert len(table.entries) == 13
    assert table.by_j(1728).disc == -4
    assert table.by_j(1729) is None
    assert -262537412640768000 in cm_j_values(config_dir)


def test_points_on_x_ns_11(config_dir):
    discs = [e.disc for e in cm_points_on_curve(11, config_dir)]
    assert sorted(discs, reverse=True) == [-3, -4, -12, -16, -27, -67, -163]


def test_conductor_divisible_by_p_is_excluded():
    assert not on_curve(CMEntry(disc=-11, j=-32768, factored="-2^15"), 11)


def test_cm_parameters():
    assert cm_q(-4).contains(mp.exp(-2 * mp.pi))
    assert cm_q(-3).value < 0
    assert cm_q(-163).contains(-mp.exp(-mp.pi * mp.sqrt(163)))
    assert cm_tau(-7).real == -0.5


def test_non_discriminant_rejected():
    with pytest.raises(ValueError):
        cm_tau(-5)
