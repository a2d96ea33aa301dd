from pathlib import Path

import pytest

from cartan_points.config import RunConfig, load_config, resolve_run_config, with_overrides
from cartan_points.errors import ConfigError
from cartan_points.settings import load_defaults


def test_yaml_defaults(app):
    cfg = resolve_run_config(11, {}, app)
    assert cfg.p == 11
    assert cfg.subgroup == "pm1"
    assert cfg.bits == 256
    assert cfg.validation_bits == 512
    assert cfg.epsilon == 1e-10
    assert cfg.max_bits == app.max_bits
    assert load_defaults(app.config_dir).get("slow", "chunk") == 64


def test_precedence(app, monkeypatch):
    monkeypatch.setenv("CARTAN_BITS", "384")
    assert resolve_run_config(11, {}, app).bits == 384
    assert resolve_run_config(11, {"bits": 512, "workers": None}, app).bits == 512


def test_unknown_override(app):
    with pytest.raises(ConfigError):
        resolve_run_config(11, {"colour": "blue"}, app)


@pytest.mark.parametrize(
    "changes",
    [{"p": 9}, {"p": 5}, {"bits": 32}, {"epsilon": 0.1}, {"index": 0}, {"workers": 0}, {"t0": 1}],
)
def test_validation(changes):
    with pytest.raises(ConfigError):
        with_overrides(RunConfig(p=11), **changes)


def test_fingerprint_tracks_result_fields():
    base = RunConfig(p=11)
    assert base.fingerprint() == RunConfig(p=11).fingerprint()
    assert len(base.fingerprint()) == 8
    assert base.fingerprint() != with_overrides(base, bits=512).fingerprint()
    assert base.fingerprint() == with_overrides(base, workers=4).fingerprint()
    assert base.fingerprint() == with_overrides(base, report_path=Path("x.json")).fingerprint()


def test_echo_is_plain(tmp_path):
    cfg = with_overrides(RunConfig(p=13), checkpoint_path=tmp_path / "c.cpt")
    echo = cfg.echo()
    assert echo["checkpoint_path"] == str(tmp_path / "c.cpt")
    assert echo["p"] == 13


def test_load_config_from_env(monkeypatch, tmp_path):
    monkeypatch.setenv("CARTAN_OUTPUT_ROOT", str(tmp_path))
    monkeypatch.setenv("CARTAN_MAX_BITS", "4096")
    monkeypatch.setenv("LOG_LEVEL", "debug")
    app = load_config()
    assert app.output_root == tmp_path.resolve()
    assert app.max_bits == 4096
    assert app.log_level == "DEBUG"
    assert (app.templates_dir / "report.md.j2").exists()
