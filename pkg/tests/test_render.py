from cartan_points.render import render_summary, write_summary


def _report(status="complete"):
    return {
        "group": {"p": 11, "subgroup": "pm1", "d": 5, "m": 2, "h_order": 2},
        "units": {"source": "circular"},
        "fingerprint": "abcd1234",
        "status": status,
        "validation": {"checks": [{"name": "product-identity", "ok": True, "residual": "1.0e-70"}]},
        "cusps": [
            {
                "cusp": 1,
                "pivot": 2,
                "companion": 4,
                "ledger": {
                    "B0": {"value": "1.0e42"},
                    "reduction": {"Xi_hat": {"value": "812.5"}, "steps": [{}, {}, {}]},
                    "Upsilon": {"value": "64.2"},
                },
                "slow": {"b1_total": 1200, "candidates": 1, "failures": []},
            }
        ],
        "candidates": [
            {"cusp": 1, "b_vector": ["-3", "4", "0", "1"], "q_c": {"value": "-2.7e-8"}, "j": {"value": "0"}, "classification": "cm-match"}
        ],
        "integral_points": [{"j": 0, "disc": -3, "cusp": 1}],
        "injections": [{"disc": -3, "j": 0, "hits": [{"cusp": 1}], "recovered": [1]}],
        "small_j": {"ell_budget": 500, "excluded": 1727, "undetermined": []},
        "timings": {"setup": 1.2, "slow": 30.5},
    }


def test_summary_sections(config_dir):
    text = render_summary(config_dir / "templates", _report())
    assert text.startswith("# Integral points on X_ns+(11), H = pm1")
    assert "status: **complete**" in text
    assert "| product-identity | yes | 1.0e-70 |" in text
    assert "| 1 | 2 | 4 | 1.0e42 | 812.5 | 64.2 | 3 | 1200 | 1 | 0 |" in text
    assert "- j = 0 (CM, D = -3), cusp 1" in text
    assert "excluded: 1727" in text
    assert "review by hand" not in text
    assert "\n\n\n" not in text


def test_validate_only_summary(config_dir, tmp_path):
    report = _report("validated")
    for key in ("cusps", "candidates", "small_j", "timings"):
        report.pop(key)
    report["integral_points"] = []
    out = write_summary(config_dir / "templates", report, tmp_path / "summary.md")
    text = out.read_text(encoding="utf-8")
    assert "## Integral points" not in text
    assert "## Small j" not in text
    assert "## Validation" in text
