from __future__ import annotations

from pathlib import Path

import pytest

from cartan_points.config import AppConfig
from cartan_points.cyclotomic import build_unit_system
from cartan_points.enumeration import choose_nu
from cartan_points.modp import build_group_context
from cartan_points.pipeline import build_frames
from cartan_points.precision import with_precision
from cartan_points.relation import kappa_of

REPO_ROOT = Path(__file__).resolve().parent.parent
BITS = 256


@pytest.fixture(autouse=True)
def working_precision():
    with with_precision(BITS):
        yield BITS


@pytest.fixture(scope="session")
def config_dir() -> Path:
    return REPO_ROOT / "config"


@pytest.fixture
def app(config_dir, tmp_path) -> AppConfig:
    return AppConfig(config_dir=config_dir, output_root=tmp_path / "runs", max_bits=1 << 14, log_level="INFO")


@pytest.fixture(scope="session")
def ctx7():
    return build_group_context(7)


@pytest.fixture(scope="session")
def ctx11():
    return build_group_context(11)


@pytest.fixture(scope="session")
def ctx13():
    return build_group_context(13)


@pytest.fixture(scope="session")
def units7(ctx7):
    with with_precision(BITS):
        return build_unit_system(ctx7)


@pytest.fixture(scope="session")
def units11(ctx11):
    with with_precision(BITS):
        return build_unit_system(ctx11)


def _working_nu(ctx, units) -> int:
    matrix, _ = build_frames(ctx, units, BITS, 0, cusps=[1])
    with with_precision(BITS):
        Theta = kappa_of(matrix) * (ctx.m * (ctx.p + 1) * ctx.h_order)
        return choose_nu(Theta, ctx.p)


@pytest.fixture(scope="session")
def nu11(ctx11, units11) -> int:
    return _working_nu(ctx11, units11)


@pytest.fixture(scope="session")
def frames11(ctx11, units11, nu11):
    """Matrix and frames of every cusp of X_ns+(11) at the working ν."""
    return build_frames(ctx11, units11, BITS, nu11)


@pytest.fixture(scope="session")
def matrix11(frames11):
    return frames11[0]


@pytest.fixture(scope="session")
def frame11(frames11):
    return frames11[1][0]


@pytest.fixture(scope="session")
def frames7(ctx7, units7):
    return build_frames(ctx7, units7, BITS, _working_nu(ctx7, units7))
