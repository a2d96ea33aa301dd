from fractions import Fraction

import pytest
from mpmath import mp

from cartan_points.cyclotomic import (
    SCHINZEL_BOUND,
    CycloElement,
    absolute_norm,
    build_unit_system,
    embed,
    galois_apply,
    height,
    load_unit_basis,
    log_embedding_matrix,
    one_minus_zeta,
    relative_norm,
)
from cartan_points.errors import UnitBasisError
from cartan_points.precision import BigReal


def _write_basis(path, p, d, units):
    lines = [f"{p} {d}"] + [",".join(str(c) for c in u.coeffs) for u in units]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_powers_of_zeta_sum_to_minus_one():
    total = CycloElement.rational(7, 1)
    for k in range(1, 7):
        total = total + CycloElement.zeta(7, k)
    assert total.is_zero()


def test_galois_action_composes():
    x = CycloElement.from_exponents(11, {1: 2, 3: Fraction(-1, 2), 0: 5})
    assert galois_apply(3, galois_apply(2, x)) == galois_apply(6, x)
    assert galois_apply(10, x) == x.conjugate()


def test_embedding_of_real_subfield_generator():
    x = CycloElement.zeta(11, 1) + CycloElement.zeta(11, 10)
    z = embed(x, 1)
    assert z.re.contains(2 * mp.cos(2 * mp.pi / 11))
    assert z.im.contains(0)


def test_norm_of_one_minus_zeta():
    assert absolute_norm(one_minus_zeta(13)) == 13


def test_relative_norm_is_fixed(ctx11):
    y = relative_norm(one_minus_zeta(11), ctx11.H)
    assert y.is_fixed_by(ctx11.H)
    assert y.is_integral()


def test_height_of_root_of_unity_vanishes():
    assert height(CycloElement.zeta(7, 2)).contains(0)


def test_circular_units(units11):
    assert units11.d == 5
    assert units11.source == "circular"
    for h in units11.heights():
        assert h.lo >= SCHINZEL_BOUND


def test_log_matrix_columns_sum_to_zero(units11):
    rows = log_embedding_matrix(units11)
    for unit in range(1, units11.d):
        assert sum((row[unit] for row in rows), BigReal.exact(0)).contains(0)
    # eta0 has norm ±p
    assert sum((row[0] for row in rows), BigReal.exact(0)).contains(mp.log(11))


def test_unit_basis_override(tmp_path, ctx11, units11):
    path = _write_basis(tmp_path / "units.txt", 11, 5, units11.etas)
    assert load_unit_basis(path, ctx11) == units11.etas
    external = build_unit_system(ctx11, path)
    assert external.source == "external-file"
    assert external.etas == units11.etas


def test_unit_basis_for_other_prime(tmp_path, ctx11, units7):
    path = _write_basis(tmp_path / "units.txt", 7, 3, units7.etas)
    with pytest.raises(UnitBasisError):
        load_unit_basis(path, ctx11)


def test_unit_basis_rejects_non_units(tmp_path, ctx11, units11):
    fake = (CycloElement.rational(11, 2), *units11.etas[1:])
    path = _write_basis(tmp_path / "units.txt", 11, 5, fake)
    with pytest.raises(UnitBasisError):
        build_unit_system(ctx11, path)


def test_unit_basis_garbage(tmp_path, ctx11):
    path = tmp_path / "units.txt"
    path.write_text("eleven five\n", encoding="utf-8")
    with pytest.raises(UnitBasisError):
        load_unit_basis(path, ctx11)
