import json

import pytest

from cartan_points import cli
from cartan_points.errors import ConfigError, ValidationFailed
from cartan_points.pipeline import STATUS_VALIDATED, RunReport
from cartan_points.validation import ValidationSummary


@pytest.fixture
def env(monkeypatch, tmp_path, config_dir):
    monkeypatch.setenv("CARTAN_OUTPUT_ROOT", str(tmp_path / "runs"))
    monkeypatch.setenv("CARTAN_CONFIG_DIR", str(config_dir))
    return tmp_path / "runs"


def _fake_report(cfg):
    summary = ValidationSummary(cfg.p, cfg.bits)
    summary.add("product-identity", True, "0")
    return RunReport(
        version="test",
        config=cfg.echo(),
        fingerprint=cfg.fingerprint(),
        status=STATUS_VALIDATED,
        group={"p": cfg.p, "subgroup": cfg.subgroup, "d": 5, "m": 2, "h_order": 2},
        units={"source": "circular"},
        validation=summary,
    )


def test_parser_flags():
    args = cli.build_parser().parse_args(
        ["--p", "13", "--subgroup", "5", "--bits", "512", "--ell-budget", "300", "--validate-only"]
    )
    assert (args.p, args.subgroup, args.bits, args.ell_budget, args.validate_only) == (13, "5", 512, 300, True)
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args([])


def test_default_paths(env, app):
    args = cli.build_parser().parse_args(["--p", "11"])
    cfg = cli.config_from_args(args, app)
    assert cfg.checkpoint_path.name == "progress.cpt"
    assert cfg.report_path.parent.name == "p11_pm1"
    args = cli.build_parser().parse_args(["--p", "11", "--validate-only"])
    assert cli.config_from_args(args, app).checkpoint_path is None


def test_success_writes_report(env, monkeypatch, capsys):
    monkeypatch.setattr(cli, "run_pipeline", lambda cfg, app: _fake_report(cfg))
    assert cli.main(["--p", "11", "--validate-only"]) == cli.EXIT_OK
    report = json.loads((env / "p11_pm1" / "report.json").read_text(encoding="utf-8"))
    assert report["status"] == STATUS_VALIDATED
    assert (env / "p11_pm1" / "summary.md").exists()
    assert (env / "p11_pm1" / "run.log").exists()
    assert "status=validated" in capsys.readouterr().out


def test_validation_failure_exit_code(env, monkeypatch):
    def boom(cfg, app):
        raise ValidationFailed("product-identity", "1e-3")

    monkeypatch.setattr(cli, "run_pipeline", boom)
    assert cli.main(["--p", "11"]) == cli.EXIT_VALIDATION


def test_error_exit_code(env, monkeypatch):
    def boom(cfg, app):
        raise ConfigError("bad")

    monkeypatch.setattr(cli, "run_pipeline", boom)
    assert cli.main(["--p", "11"]) == cli.EXIT_ERROR
    assert cli.main(["--p", "15"]) == cli.EXIT_ERROR
