import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ellipstress import fileio
from ellipstress.errors import InputError, NonPositivePrice, ParseError, UnmappedTicker
from ellipstress.estimation import ReturnPanel
from ellipstress.model import EllipticalModel, Normal, StudentT


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


PRICES = "date,AAA,BBB\n2020-01-01,10,20\n2020-01-02,11,19\n2020-01-03,12.5,21\n"
SECTORS = "ticker,group\nAAA,X\nBBB,Y\n"


class TestPrices:
    def test_parse(self, tmp_path):
        dates, tickers, prices = fileio.read_prices(write(tmp_path, "p.csv", PRICES))
        assert dates == ["2020-01-01", "2020-01-02", "2020-01-03"]
        assert tickers == ["AAA", "BBB"]
        assert prices[2, 0] == 12.5

    def test_negative_price_line(self, tmp_path):
        text = PRICES.replace("2020-01-02,11,19", "2020-01-02,11,-19")
        with pytest.raises(NonPositivePrice) as ei:
            fileio.read_prices(write(tmp_path, "p.csv", text))
        assert ei.value.line == 3
        assert ei.value.ticker == "BBB"

    @pytest.mark.parametrize(
        "text, line",
        [
            ("", 1),
            ("day,AAA\n2020-01-01,1\n2020-01-02,1\n", 1),
            ("date,AAA,AAA\n2020-01-01,1,1\n2020-01-02,1,1\n", 1),
            ("date,AAA\n2020-01-01,1\n2020-01-02,1,3\n", 3),
            ("date,AAA\n2020-01-01,1\n2020/01/02,1\n", 3),
            ("date,AAA\n2020-01-02,1\n2020-01-01,1\n", 3),
            ("date,AAA\n2020-01-01,1\n2020-01-02,1x\n", 3),
        ],
        ids=["empty", "header", "dup", "fields", "date", "order", "number"],
    )
    def test_parse_errors(self, tmp_path, text, line):
        with pytest.raises(ParseError) as ei:
            fileio.read_prices(write(tmp_path, "p.csv", text))
        assert ei.value.line == line
        assert "p.csv" in str(ei.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            fileio.read_prices(str(tmp_path / "nope.csv"))

    def test_missing_cell_drops_column(self, tmp_path):
        text = "date,AAA,BBB\n2020-01-01,10,20\n2020-01-02,,19\n2020-01-03,12,21\n"
        with pytest.warns(UserWarning):
            panel = fileio.load_panel_from_csv(write(tmp_path, "p.csv", text), None)
        assert panel.tickers == ("BBB",)


class TestSectors:
    def test_parse(self, tmp_path):
        assert fileio.read_sectors(write(tmp_path, "s.csv", SECTORS)) == {"AAA": "X", "BBB": "Y"}

    def test_conflict(self, tmp_path):
        with pytest.raises(ParseError) as ei:
            fileio.read_sectors(write(tmp_path, "s.csv", SECTORS + "AAA,Z\n"))
        assert ei.value.line == 4

    def test_unmapped(self, tmp_path):
        p = write(tmp_path, "p.csv", PRICES)
        s = write(tmp_path, "s.csv", "ticker,group\nAAA,X\n")
        with pytest.raises(UnmappedTicker) as ei:
            fileio.load_panel_from_csv(p, s)
        assert ei.value.tickers == ["BBB"]


class TestPanelCache:
    def test_round_trip(self, tmp_path):
        panel = fileio.load_panel_from_csv(write(tmp_path, "p.csv", PRICES), write(tmp_path, "s.csv", SECTORS))
        text, groups = fileio.panel_cache_text(panel)
        assert text.startswith(fileio.PANEL_MAGIC + "\n")
        path = write(tmp_path, "panel.csv", text)
        write(tmp_path, os.path.basename(fileio.groups_path_for(path)), groups)
        back = fileio.read_panel_cache(path)
        np.testing.assert_array_equal(back.returns, panel.returns)
        assert back.tickers == panel.tickers
        assert back.dates == panel.dates
        assert back.groups == panel.groups

    def test_not_a_cache(self, tmp_path):
        with pytest.raises(ParseError):
            fileio.read_panel_cache(write(tmp_path, "x.csv", PRICES))


class TestModelJson:
    @pytest.mark.parametrize("kind", [Normal(), StudentT(7.3)], ids=["normal", "student"])
    def test_round_trip_bit_identical(self, tmp_path, rng, kind):
        a = rng.normal(size=(4, 4))
        m = EllipticalModel(rng.normal(size=4) / 3, a @ a.T + np.eye(4), kind, ("a", "b", "c", "d"))
        text = fileio.model_to_json(m, {"T": 10})
        path = write(tmp_path, "m.json", text)
        back, meta = fileio.read_model(path)
        np.testing.assert_array_equal(back.mu, m.mu)
        np.testing.assert_array_equal(back.omega, m.omega)
        assert back.kind == m.kind and back.labels == m.labels
        assert meta == {"T": 10}
        assert fileio.model_to_json(back, meta) == text

    def test_schema(self):
        d = json.loads(fileio.model_to_json(EllipticalModel([0.0], [[1.0]], StudentT(5))))
        assert d["version"] == 1 and d["kind"] == "student_t" and d["nu"] == 5.0
        assert d["omega"] == [[1.0]]

    def test_bad_version_and_kind(self):
        with pytest.raises(ParseError):
            fileio.model_from_dict({"version": 9})
        with pytest.raises(ParseError):
            fileio.model_from_dict({"version": 1, "kind": "cauchy", "labels": ["a"], "mu": [0], "omega": [[1]]})

    def test_malformed_json(self, tmp_path):
        with pytest.raises(ParseError):
            fileio.read_model(write(tmp_path, "m.json", "{\n  oops"))


class TestWriters:
    @settings(max_examples=200)
    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_float_round_trip(self, v):
        assert float(fileio.fmt_float(v)) == v

    def test_dumps_nan_is_null(self):
        s = fileio.dumps({"a": [1.0, math.nan], "b": None, "c": True})
        assert json.loads(s) == {"a": [1.0, None], "b": None, "c": True}

    def test_csv_blank_for_nan(self):
        text = fileio.csv_text(["g", "v"], [["x", math.nan], ["y", 0.5]])
        assert text == "g,v\nx,\ny,0.5\n"
        assert "NaN" not in text and "nan" not in text

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        path = str(tmp_path / "sub" / "f.txt")
        fileio.write_atomic(path, "hello\n")
        assert open(path).read() == "hello\n"
        assert os.listdir(tmp_path / "sub") == ["f.txt"]
