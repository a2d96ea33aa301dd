import pytest
from mpmath import mpf

from cartan_points.errors import ValidationFailed
from cartan_points.validation import ValidationSummary, validate_precomputation

EXPECTED_CHECKS = [
    "product-identity",
    "orbit-product",
    "unit-system",
    "log-column-sums",
    "ord-sum",
    "ord-bound",
    "degree-bound",
    "inverse-residual",
    "reconstruction",
    "delta0-vanishes",
    "cross-mode",
]


def test_suite_passes_for_7(ctx7, units7, frames7):
    matrix, frames = frames7
    summary = validate_precomputation(
        ctx7, units7, matrix, frames, validation_bits=512, samples=3, cross_mode_points=10, reconstruction_vectors=20
    )
    assert [c.name for c in summary.checks] == EXPECTED_CHECKS
    assert summary.ok, summary.failures()
    summary.raise_for_failures()


def test_first_failure_is_raised():
    summary = ValidationSummary(11, 256)
    summary.add("product-identity", True, mpf("1e-70"))
    summary.add("ord-sum", False, 3)
    summary.add("cross-mode", False, 1)
    assert [c.name for c in summary.failures()] == ["ord-sum", "cross-mode"]
    with pytest.raises(ValidationFailed) as info:
        summary.raise_for_failures()
    assert "ord-sum" in str(info.value)
