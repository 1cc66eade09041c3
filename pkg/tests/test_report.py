"""Tests for JSON and CSV report files."""

import json
import math

import numpy as np
import pytest

from ssflab.report import (
    csv_path_for,
    dumps_csv,
    dumps_report,
    load_report,
    to_jsonable,
    worst_residual,
    write_csv,
    write_json,
)


class TestToJsonable:
    def test_numpy_and_complex_values(self):
        """Test conversion of numpy scalars, arrays and complex numbers."""
        data = {"a": np.float64(1.5), "b": np.int64(3), "c": 1 + 2j, "d": np.array([1, 2]), "e": (True,)}

        assert to_jsonable(data) == {"a": 1.5, "b": 3, "c": [1.0, 2.0], "d": [1, 2], "e": [True]}

    def test_non_finite_floats_become_strings(self):
        """Test that inf and nan are written as strings."""
        assert to_jsonable([math.inf, float("nan")]) == ["inf", "nan"]


class TestJsonReports:
    def test_canonical_output(self):
        """Test sorted keys, two-space indent and trailing newline."""
        text = dumps_report({"b": 1, "a": {"y": 2, "x": 1}})

        assert text == '{\n  "a": {\n    "x": 1,\n    "y": 2\n  },\n  "b": 1\n}\n'

    def test_identical_data_gives_identical_bytes(self, tmp_path):
        """Test byte-identical files for equal data."""
        first = write_json(tmp_path / "one.json", {"seed": 1, "values": [0.1, 0.2]})
        second = write_json(tmp_path / "two.json", {"values": [0.1, 0.2], "seed": 1})

        assert first.read_bytes() == second.read_bytes()

    def test_load_report(self, tmp_path):
        """Test reading back a written report."""
        path = write_json(tmp_path / "nested" / "r.json", {"command": "ssf"})

        assert load_report(path) == {"command": "ssf"}

    def test_load_report_rejects_non_objects(self, tmp_path):
        """Test that a JSON list is rejected."""
        path = tmp_path / "r.json"
        path.write_text(json.dumps([1, 2]))

        with pytest.raises(ValueError, match="must contain a JSON object"):
            load_report(path)

    def test_load_report_rejects_invalid_json(self, tmp_path):
        """Test that malformed JSON is rejected."""
        path = tmp_path / "r.json"
        path.write_text("{not json")

        with pytest.raises(ValueError, match="not valid JSON"):
            load_report(path)

    def test_load_report_missing_file(self, tmp_path):
        """Test that a missing file raises ValueError."""
        with pytest.raises(ValueError, match="cannot read report"):
            load_report(tmp_path / "absent.json")


class TestCsvReports:
    def test_lf_line_endings_and_float_repr(self):
        """Test header, LF endings and round-trippable floats."""
        text = dumps_csv([{"j": 1, "re": 0.1, "im": -2.0, "extra": "x"}], ["j", "re", "im"])

        assert text == "j,re,im\n1,0.1,-2.0\n"

    def test_write_csv_next_to_json(self, tmp_path):
        """Test the sibling CSV path and its contents."""
        path = write_csv(csv_path_for(tmp_path / "report.json"), [{"dim": 4}], ["dim"])

        assert path.name == "report.csv"
        assert path.read_bytes() == b"dim\n4\n"


class TestWorstResidual:
    def test_largest_value(self):
        """Test the maximum with a zero floor."""
        assert worst_residual([1e-3, 2e-2, 5e-4]) == pytest.approx(2e-2)
        assert worst_residual([]) == 0.0
        assert worst_residual([-1.0]) == 0.0

    def test_nan_outranks_everything(self):
        """Test that NaN wins regardless of position, including over infinity."""
        assert math.isnan(worst_residual([math.nan, 1.0]))
        assert math.isnan(worst_residual([1.0, math.nan]))
        assert math.isnan(worst_residual([math.inf, math.nan]))
        assert math.isnan(worst_residual(np.array([0.0, np.nan])))

    def test_infinity_kept(self):
        """Test that an infinite residual is reported as such."""
        assert worst_residual([1.0, math.inf]) == math.inf
