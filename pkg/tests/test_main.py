"""Tests for CLI commands."""

import json
import math
from unittest.mock import patch

import pytest
from typer.testing import CliRunner

from ssflab.main import app
from ssflab.numlin import matrix_to_json, random_contraction_pair
from tests.fakes import RecordingExecutor

runner = CliRunner(env={"COLUMNS": "200", "NO_COLOR": "1", "TERM": "dumb"})


def test_version():
    result = runner.invoke(app, ["version"])
    assert result.exit_code == 0
    assert "ssflab v0.1.0" in result.stdout


def test_global_options_in_help():
    """Test that global options appear in the main help."""
    result = runner.invoke(app, ["--help"])
    assert result.exit_code == 0
    assert "--config" in result.stdout
    assert "--verbose" in result.stdout
    assert "--workers" in result.stdout


class TestVerifyCommand:

    @patch("ssflab.main.get_executor")
    def test_symbols_suite_passes(self, mock_get_executor):
        """Test a passing symbols suite through a fake executor."""
        executor = RecordingExecutor(workers=3)
        mock_get_executor.return_value = executor

        result = runner.invoke(app, ["--workers", "3", "verify", "--suite", "symbols", "--trials", "2"])

        assert result.exit_code == 0
        assert "Suite: symbols (2 instances)" in result.stdout
        assert "base_decomp" in result.stdout
        mock_get_executor.assert_called_once_with(3)
        assert len(executor.calls) == 2
        assert executor.shutdown_called

    @patch("ssflab.main.get_executor")
    def test_tight_tolerance_fails(self, mock_get_executor):
        """Test that residuals above an override tolerance exit with 1."""
        mock_get_executor.return_value = RecordingExecutor()

        result = runner.invoke(app, ["verify", "--suite", "symbols", "--trials", "1", "--tolerance", "1e-300"])

        assert result.exit_code == 1
        assert "Residuals above tolerance" in result.stdout

    def test_unknown_suite_is_usage_error(self):
        """Test that an unknown suite exits with 2."""
        result = runner.invoke(app, ["verify", "--suite", "everything"])

        assert result.exit_code == 2
        assert "unknown suite" in result.stdout

    @patch("ssflab.main.get_executor")
    def test_writes_json_and_csv(self, mock_get_executor, tmp_path):
        """Test that --out writes a JSON report and a sibling CSV."""
        mock_get_executor.return_value = RecordingExecutor()
        out = tmp_path / "verify.json"

        result = runner.invoke(app, ["verify", "--suite", "symbols", "--trials", "1", "--seed", "4", "--out", str(out)])

        assert result.exit_code == 0
        data = json.loads(out.read_text())
        assert data["command"] == "verify"
        assert data["config"]["seed"] == 4
        assert "workers" not in data["config"]
        assert data["result"]["passed"] is True
        assert (tmp_path / "verify.csv").read_text().startswith("suite,name,residual,tolerance,passed\n")

    def test_reports_identical_across_worker_counts(self, tmp_path):
        """Test that the worker count does not change the report bytes."""
        one, two = tmp_path / "one.json", tmp_path / "two.json"

        first = runner.invoke(app, ["-w", "1", "verify", "--suite", "symbols", "--trials", "3", "--out", str(one)])
        second = runner.invoke(app, ["-w", "2", "verify", "--suite", "symbols", "--trials", "3", "--out", str(two)])

        assert first.exit_code == 0
        assert second.exit_code == 0
        assert one.read_bytes() == two.read_bytes()

    @patch("ssflab.main.get_executor")
    def test_config_file(self, mock_get_executor, tmp_path):
        """Test that a config file selects the suite and trial count."""
        mock_get_executor.return_value = RecordingExecutor()
        config = tmp_path / "run.cfg"
        config.write_text("suite = symbols\ntrials = 1\n")

        result = runner.invoke(app, ["--config", str(config), "verify"])

        assert result.exit_code == 0
        assert "Suite: symbols (1 instances)" in result.stdout

    def test_bad_config_file(self, tmp_path):
        """Test that an invalid config file exits with 2."""
        config = tmp_path / "run.cfg"
        config.write_text("colour = blue\n")

        result = runner.invoke(app, ["--config", str(config), "verify"])

        assert result.exit_code == 2
        assert "unknown key" in result.stdout

    @patch("ssflab.suites._symbols_instance", return_value={"phi_grid": math.nan})
    @patch("ssflab.main.get_executor")
    def test_nan_residual_fails(self, mock_get_executor, mock_instance):
        """Test that a NaN residual is reported as a failure, not dropped."""
        mock_get_executor.return_value = RecordingExecutor()

        result = runner.invoke(app, ["verify", "--suite", "symbols", "--trials", "2"])

        assert result.exit_code == 1
        assert "phi_grid" in result.stdout
        assert "nan" in result.stdout


class TestEstimateCommand:

    @patch("ssflab.main.get_executor")
    def test_main_probe(self, mock_get_executor, tmp_path):
        """Test the main-estimate probe table and CSV."""
        mock_get_executor.return_value = RecordingExecutor()
        out = tmp_path / "est.json"

        result = runner.invoke(
            app, ["estimate", "--dims", "2,3", "--n", "1", "--alpha", "3", "--trials", "2", "--out", str(out)]
        )

        assert result.exit_code == 0
        assert "r1_max" in result.stdout
        assert (tmp_path / "est.csv").read_text().splitlines()[0] == "dim,r1_max,r2_max"
        assert len(json.loads(out.read_text())["result"]["cells"]) == 4

    @pytest.mark.parametrize("alpha", ["1.5", "2"])
    def test_norm_variant_needs_alpha_above_order(self, alpha):
        """Test that α ≤ n without --trace-only is a usage error."""
        result = runner.invoke(app, ["estimate", "--alpha", alpha, "--n", "2"])

        assert result.exit_code == 2
        assert "needs α > n" in result.stdout

    @patch("ssflab.main.get_executor")
    def test_trace_only_at_alpha_equal_to_order(self, mock_get_executor, tmp_path):
        """Test the trace-only columns when α = n."""
        mock_get_executor.return_value = RecordingExecutor()
        out = tmp_path / "trace.json"

        result = runner.invoke(
            app,
            ["estimate", "--dims", "2", "--n", "2", "--alpha", "2", "--trials", "2", "--trace-only", "--out", str(out)],
        )

        assert result.exit_code == 0
        assert "r1_max" not in result.stdout
        assert (tmp_path / "trace.csv").read_text().splitlines()[0] == "dim,r2_max"
        assert json.loads(out.read_text())["result"]["params"]["trace_only"] is True

    @patch("ssflab.main.get_executor")
    def test_kpss_probe(self, mock_get_executor):
        """Test the phase and modulus transform probe."""
        mock_get_executor.return_value = RecordingExecutor()

        result = runner.invoke(app, ["estimate", "--probe", "kpss", "--dims", "2", "--alpha", "2", "--trials", "1"])

        assert result.exit_code == 0
        assert "upsilon:1" in result.stdout
        assert "gamma:1.0" in result.stdout


class TestSsfCommand:

    def test_random_pair(self, tmp_path):
        """Test reconstruction on a seeded random pair."""
        out = tmp_path / "ssf.json"

        result = runner.invoke(app, ["ssf", "--dim", "3", "--n", "2", "--K", "4", "--samples", "2", "--out", str(out)])

        assert result.exit_code == 0
        assert "Round trip" in result.stdout
        data = json.loads(out.read_text())
        assert data["result"]["K"] == 4
        assert len(data["result"]["coefficients"]) == 4
        assert (tmp_path / "ssf.csv").read_text().splitlines()[0] == "j,re,im"

    def test_input_pair_and_inline_poly(self, tmp_path):
        """Test a pair read from JSON with an extra inline polynomial."""
        pair = random_contraction_pair(3, 5)
        source = tmp_path / "pair.json"
        source.write_text(json.dumps({"u0": matrix_to_json(pair.u0), "v": matrix_to_json(pair.v)}))

        result = runner.invoke(
            app, ["ssf", "--input", str(source), "--n", "1", "--K", "4", "--samples", "1", "--poly", "[[1, 0], [0, 1], 0.5]"]
        )

        assert result.exit_code == 0
        assert "dim=3" in result.stdout

    def test_zero_perturbation_gives_zero_coefficients(self, tmp_path):
        """Test that a pair file with V = 0 yields a zero series."""
        pair = random_contraction_pair(3, 2)
        source = tmp_path / "pair.json"
        source.write_text(json.dumps({"u0": matrix_to_json(pair.u0), "v": matrix_to_json(0 * pair.v)}))
        out = tmp_path / "zero.json"

        result = runner.invoke(app, ["ssf", "--input", str(source), "--K", "3", "--samples", "2", "--out", str(out)])

        assert result.exit_code == 0
        assert all(re == 0 and im == 0 for re, im in json.loads(out.read_text())["result"]["coefficients"])

    def test_insufficient_truncation(self):
        """Test that a check degree beyond K + n − 1 exits with 2 and names K."""
        result = runner.invoke(app, ["ssf", "--K", "2", "--check-degree", "10", "--n", "3", "--dim", "2"])

        assert result.exit_code == 2
        assert "required K >= 8" in result.stdout

    def test_malformed_input(self, tmp_path):
        """Test that a malformed pair file is a usage error."""
        source = tmp_path / "pair.json"
        source.write_text('{"u0": {"dim": 2, "entries": []}}')

        result = runner.invoke(app, ["ssf", "--input", str(source)])

        assert result.exit_code == 2

    @patch("ssflab.main.verify_trace_formula", return_value=math.nan)
    def test_nan_trace_residual_fails(self, mock_verify):
        """Test that a NaN trace-formula residual exits with 1."""
        result = runner.invoke(app, ["ssf", "--dim", "2", "--n", "1", "--K", "4", "--samples", "1", "--poly", "[1, 1]"])

        assert result.exit_code == 1
        assert "above tolerance" in result.stdout
        mock_verify.assert_called_once()


class TestMoiCommand:

    def test_divided_difference_on_order_region(self, tmp_path):
        """Test a region-restricted divided-difference integral and its report."""
        out = tmp_path / "moi.json"

        result = runner.invoke(
            app,
            ["moi", "--symbol", "divdiff", "--region", "order:j0<=j2<j1", "--n", "2", "--dim", "4", "--out", str(out)],
        )

        assert result.exit_code == 0
        assert "order:j0<=j2<j1" in result.stdout
        data = json.loads(out.read_text())["result"]
        assert data["passed"] is True
        assert {c["name"] for c in data["checks"]} == {"moi_naive", "moi_adjoint", "moi_duality", "moi_additivity"}
        assert data["op_norm"] > 0
        assert (tmp_path / "moi.csv").exists()

    def test_phase_symbol_with_inline_poly_ignored(self):
        """Test the phase symbol on one operator over the off-diagonal region."""
        result = runner.invoke(
            app, ["moi", "--symbol", "psi:1", "--region", "offdiagonal", "--n", "1", "--dim", "5", "--poly", "[1]"]
        )

        assert result.exit_code == 0
        assert "moi_adjoint" in result.stdout

    def test_large_dimension_skips_direct_sum(self):
        """Test that the projection-sum comparison is skipped above dimension 8."""
        result = runner.invoke(app, ["moi", "--symbol", "phi:1,0,2", "--n", "1", "--dim", "10"])

        assert result.exit_code == 0
        assert "moi_naive" not in result.stdout
        assert "moi_duality" in result.stdout

    def test_unknown_region(self):
        """Test that an unknown region is a usage error."""
        result = runner.invoke(app, ["moi", "--region", "somewhere"])

        assert result.exit_code == 2
        assert "unknown region" in result.stdout

    def test_symbol_arity_mismatch(self):
        """Test that a symbol of the wrong arity is a usage error."""
        result = runner.invoke(app, ["moi", "--symbol", "psi:1", "--n", "2"])

        assert result.exit_code == 2
        assert "arity" in result.stdout

    def test_region_from_config_file(self, tmp_path):
        """Test that symbol and region can come from the config file."""
        config = tmp_path / "moi.cfg"
        config.write_text("symbol = phi:2,1,0\nregion = diagonal\nn = 2\ndim = 3\n")

        result = runner.invoke(app, ["--config", str(config), "moi"])

        assert result.exit_code == 0
        assert "diagonal" in result.stdout


class TestReportCommand:

    def test_renders_ssf_report_and_exports_csv(self, tmp_path):
        """Test rendering a saved ssf report and re-exporting it."""
        out = tmp_path / "ssf.json"
        runner.invoke(app, ["ssf", "--dim", "2", "--n", "1", "--K", "3", "--samples", "1", "--out", str(out)])
        export = tmp_path / "copy.csv"

        result = runner.invoke(app, ["report", str(out), "--csv", str(export)])

        assert result.exit_code == 0
        assert "Report: ssf" in result.stdout
        assert export.read_text().splitlines()[0] == "j,re,im"
        assert len(export.read_text().splitlines()) == 4

    def test_unrecognized_report(self, tmp_path):
        """Test that a JSON object without rows is rejected."""
        path = tmp_path / "other.json"
        path.write_text('{"result": {}}')

        result = runner.invoke(app, ["report", str(path)])

        assert result.exit_code == 2
        assert "does not look like an ssflab report" in result.stdout

    def test_missing_report(self, tmp_path):
        """Test that a missing file exits with 2."""
        result = runner.invoke(app, ["report", str(tmp_path / "absent.json")])

        assert result.exit_code == 2
