"""Tests for Gâteaux derivatives, Taylor remainders and ratio experiments."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ssflab.deriv import (
    derivative_moi,
    derivative_poly_path,
    finite_difference_derivative,
    gauss_legendre_unit,
    main_estimate_experiment,
    monomial_remainder_traces,
    ratio_cell_for,
    relative_error,
    remainder_via_integral,
    taylor_remainder,
    trace_identity_check,
)
from ssflab.numlin import ContractionPair, random_contraction_pair
from ssflab.poly import Polynomial, derivative, sup_norm_circle
from tests.fakes import RecordingExecutor, ReversingExecutor

F = Polynomial((0.2, -1j, 0.7, 0.3 + 0.1j, -0.4, 0.25))


@pytest.fixture
def pair():
    return random_contraction_pair(5, 3)


@pytest.fixture
def unitary_pair():
    return random_contraction_pair(5, 8, unitary_u0=True)


class TestDerivativePolyPath:
    def test_square(self, pair):
        """Test the first two derivatives of (U_0 + tV)^2 at 0."""
        f = Polynomial.monomial(2)
        u, v = pair.u0, pair.v

        assert_allclose(derivative_poly_path(pair, f, 1), u @ v + v @ u, atol=1e-12)
        assert_allclose(derivative_poly_path(pair, f, 2), 2 * v @ v, atol=1e-12)
        assert_allclose(derivative_poly_path(pair, f, 3), 0, atol=1e-12)

    def test_order_zero_is_value(self, pair):
        """Test n = 0 returns f(U_{t0})."""
        assert_allclose(derivative_poly_path(pair, F, 0, 0.3), F.matrix_value(pair.at(0.3)), atol=1e-12)

    def test_invalid_arguments_rejected(self, pair):
        """Test negative orders and t0 outside [0, 1]."""
        with pytest.raises(ValueError, match="must be >= 0"):
            derivative_poly_path(pair, F, -1)
        with pytest.raises(ValueError, match="t0 must lie in"):
            derivative_poly_path(pair, F, 1, 1.5)


class TestDerivativeRoutes:
    @pytest.mark.parametrize("n", [0, 1, 2, 3])
    def test_moi_route_matches_path(self, unitary_pair, n):
        """Test n! T_{f^[n]}(V, …, V) against the path expansion."""
        expected = derivative_poly_path(unitary_pair, F, n)

        result = derivative_moi(unitary_pair.spectral, unitary_pair.v, F, n)

        assert relative_error(result, expected) < 1e-10

    def test_moi_route_above_degree_vanishes(self, unitary_pair):
        """Test that orders above deg f give zero."""
        result = derivative_moi(unitary_pair.spectral, unitary_pair.v, Polynomial.monomial(2), 3)

        assert_allclose(result, 0)

    def test_moi_route_needs_spectral_data(self, unitary_pair):
        """Test that a bare matrix is rejected."""
        with pytest.raises(TypeError, match="spectral data"):
            derivative_moi(unitary_pair.u0, unitary_pair.v, F, 1)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_finite_differences_match_path(self, pair, n):
        """Test a polynomial-exact central stencil at t0 = 0.5."""
        accuracy = max(4, F.degree - n + 1)

        fd = finite_difference_derivative(pair, F, n, 0.5, step=0.04, accuracy=accuracy)

        assert relative_error(fd, derivative_poly_path(pair, F, n, 0.5)) < 1e-6

    def test_one_sided_stencil_at_left_end(self, pair):
        """Test the forward stencil at t0 = 0 for a first derivative."""
        fd = finite_difference_derivative(pair, F, 1, 0.0)

        assert relative_error(fd, derivative_poly_path(pair, F, 1)) < 1e-5

    def test_finite_differences_need_positive_order(self, pair):
        """Test that n = 0 is rejected."""
        with pytest.raises(ValueError, match="n >= 1"):
            finite_difference_derivative(pair, F, 0)


class TestTraceIdentity:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_identity_holds(self, pair, n):
        """Test tr dⁿ f(U_t) = tr(d^{n−1} f′(U_t) V)."""
        assert trace_identity_check(pair, F, n, 0.25) < 1e-10


class TestRemainders:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_integral_form_matches_expansion(self, pair, n):
        """Test the Gauss–Legendre integral remainder against the expansion."""
        assert relative_error(remainder_via_integral(pair, F, n), taylor_remainder(pair, F, n)) < 1e-12

    def test_order_zero_is_value_at_endpoint(self, pair):
        """Test R_0 = f(U_0 + V)."""
        assert_allclose(taylor_remainder(pair, F, 0), F.matrix_value(pair.u1), atol=1e-12)

    def test_remainder_above_degree_vanishes(self, pair):
        """Test R_n = 0 when n > deg f."""
        assert_allclose(taylor_remainder(pair, F, F.degree + 1), 0, atol=1e-12)
        assert_allclose(remainder_via_integral(pair, F, F.degree + 1), 0)

    def test_monomial_traces(self, pair):
        """Test batched monomial traces against single remainders."""
        traces = monomial_remainder_traces(pair, 2, 5)

        for offset, value in enumerate(traces):
            k = 2 + offset
            expected = np.trace(taylor_remainder(pair, Polynomial.monomial(k), 2))
            assert value == pytest.approx(expected, abs=1e-11)

    def test_gauss_legendre_weights(self):
        """Test that the rule integrates t^5 exactly with four nodes."""
        ts, ws = gauss_legendre_unit(4)

        assert float(np.sum(ws)) == pytest.approx(1.0)
        assert float(np.sum(ws * ts**5)) == pytest.approx(1 / 6)


class TestMainEstimateExperiment:
    def test_reproducible(self):
        """Test that the same seed gives identical cells."""
        first = main_estimate_experiment([2, 3], 2, 5.0, 2, 11, max_degree=6)
        second = main_estimate_experiment([2, 3], 2, 5.0, 2, 11, max_degree=6)

        assert first.to_dict() == second.to_dict()

    def test_order_independent(self):
        """Test that reversed execution order gives the same report."""
        serial = main_estimate_experiment([2, 3], 1, 3.0, 2, 4, max_degree=5)
        executor = ReversingExecutor()
        reversed_run = main_estimate_experiment([2, 3], 1, 3.0, 2, 4, max_degree=5, executor=executor)

        assert serial.to_dict() == reversed_run.to_dict()
        assert len(executor.calls) == 4

    def test_summary_shape(self):
        """Test summary keys and finiteness of the ratios."""
        report = main_estimate_experiment([2], 2, 4.0, 3, 0, max_degree=6, executor=RecordingExecutor())

        summary = report.summary()

        assert set(summary["per_dim_max"]) == {"2"}
        assert set(summary["quantiles"]["2"]) == {"r1_q50", "r1_q90", "r2_q50", "r2_q90"}
        assert all(math.isfinite(c.r1) and math.isfinite(c.r2) for c in report.cells)
        assert [c.trial for c in report.cells] == [0, 1, 2]

    @pytest.mark.parametrize("alpha, n", [(2.0, 2), (1.5, 2), (1.0, 1)])
    def test_norm_variant_needs_alpha_above_order(self, alpha, n):
        """Test that the norm variant rejects α ≤ n."""
        with pytest.raises(ValueError, match="needs α > n"):
            main_estimate_experiment([2], n, alpha, 1, 0)

    def test_trace_variant_rejects_alpha_below_order(self):
        """Test that the trace variant still rejects α < n."""
        with pytest.raises(ValueError, match="needs α ≥ n"):
            main_estimate_experiment([2], 2, 1.5, 1, 0, trace_only=True)

    def test_alpha_equal_to_order_is_trace_only(self):
        """Test that the trace variant at α = n measures only the trace ratio."""
        report = main_estimate_experiment([2, 3], 2, 2.0, 2, 0, trace_only=True, max_degree=6)

        summary = report.summary()

        assert report.params["trace_only"] is True
        assert all(c.r1 is None and math.isfinite(c.r2) for c in report.cells)
        assert summary["per_dim_max"]["2"].keys() == {"r2"}
        assert set(summary["quantiles"]["3"]) == {"r2_q50", "r2_q90"}

    def test_scalar_ratios_agree(self):
        """Test that on a 1x1 pair both ratios equal |f^(n)(u_t)| / ‖f^(n)‖_∞ and stay below one."""
        report = main_estimate_experiment([1], 2, 3.0, 6, 2, max_degree=8)

        for c in report.cells:
            assert c.r1 == pytest.approx(c.r2, rel=1e-12)
            assert c.r2 <= 1 + 1e-9

    def test_scalar_ratio_closed_form(self):
        """Test the 1x1 ratio against the second derivative at the path point."""
        pair = ContractionPair(np.array([[0.5]]), np.array([[0.3j]]))
        f2 = derivative(F, 2)

        cell = ratio_cell_for(pair, F, 2, 3.0, 0.4)

        expected = abs(f2(0.5 + 0.4 * 0.3j)) / sup_norm_circle(f2)
        assert cell.r1 == pytest.approx(expected, rel=1e-9)
        assert cell.r2 == pytest.approx(expected, rel=1e-9)

    def test_zero_perturbation_gives_zero_ratios(self):
        """Test that V = 0 yields zero ratios instead of dividing by zero."""
        base = random_contraction_pair(3, 1)
        pair = ContractionPair(base.u0, np.zeros((3, 3), dtype=complex))

        cell = ratio_cell_for(pair, F, 2, 3.0, 0.5)

        assert cell.r1 == 0.0
        assert cell.r2 == 0.0


def test_relative_error_uses_unit_floor():
    """Test that small references are compared absolutely."""
    a = np.zeros((2, 2), dtype=complex)
    b = np.diag([1e-3, 0]).astype(complex)

    assert relative_error(a, b) == pytest.approx(1e-3)
