import pandas as pd
import pytest

from cartan_points import batch
from cartan_points.errors import ReductionStalled


def test_parse_lines():
    text = "# primes\n11\n13 5  # H = <5>\n\n17 pm1\n"
    assert batch.parse_lines(text) == [(11, None), (13, "5"), (17, "pm1")]
    with pytest.raises(ValueError):
        batch.parse_lines("eleven\n")


def test_failed_entry_becomes_error_row(app, monkeypatch):
    def boom(cfg, app):
        raise ReductionStalled("cusp 3: no usable r")

    monkeypatch.setattr(batch, "run_pipeline", boom)
    row = batch.run_entry(11, None, app, None)
    assert row["status"] == "error"
    assert row["subgroup"] == "pm1"
    assert "no usable r" in row["notes"]
    assert set(row) == set(batch.COLUMNS)


def test_write_table(tmp_path):
    rows = [
        {"p": 11, "subgroup": "pm1", "status": "complete", "integral_j": "0,1728", "runtime_s": 12.5},
        {"p": 13, "subgroup": "5", "status": "error", "notes": "error: stalled"},
    ]
    out = batch.write_table(rows, tmp_path / "out" / "summary.csv")
    df = pd.read_csv(out)
    assert list(df.columns) == batch.COLUMNS
    assert df["p"].tolist() == [11, 13]
    assert df.loc[1, "status"] == "error"

    xlsx = batch.write_table(rows, tmp_path / "summary.xlsx")
    assert pd.read_excel(xlsx)["subgroup"].astype(str).tolist() == ["pm1", "5"]
