"""Tests for the φ symbol families and their reduction identities."""

import math

import numpy as np
import pytest

from ssflab.numlin import make_rng
from ssflab.poly import Polynomial, derivative, divided_difference
from ssflab.symbols import (
    SymbolPhi,
    check_base_decomp,
    check_green_identities,
    check_tmkh,
    diagonal_constant,
    eval_phi,
    phi_grid,
    phi_hm,
    phi_hm_grid,
    phi_quadrature,
)

H = Polynomial((0.5, -1j, 2.0, 0.25, 1 + 1j))
NODES = [np.exp(0.3j), np.exp(1.9j), np.exp(-2.2j), np.exp(0.8j), np.exp(2.9j)]


class TestEvalPhi:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_unweighted_symbol_is_divided_difference(self, n):
        """Test φ_{n,f^(n),0,0} = f^[n]."""
        f = Polynomial((1, 2j, -1, 0.5, 3, -2j, 1))
        sym = SymbolPhi(n, derivative(f, n))

        assert eval_phi(sym, NODES[: n + 1]) == pytest.approx(divided_difference(f, NODES[: n + 1]), rel=1e-12)

    def test_order_one_reverses_arguments(self):
        """Test φ_{1,h,·,k}(λ0, λ1) = φ_{h,k}(λ1, λ0)."""
        sym = SymbolPhi(1, H, m=7, k=2)

        assert eval_phi(sym, NODES[:2]) == pytest.approx(phi_hm(H, 2, NODES[1], NODES[0]), rel=1e-12)

    def test_phi_hm_at_coincident_points(self):
        """Test φ_{h,m}(λ, λ) = h(λ)/(m+1)."""
        lam = NODES[2]

        assert phi_hm(H, 3, lam, lam) == pytest.approx(H(lam) / 4, rel=1e-12)

    def test_node_count_checked(self):
        """Test that the wrong number of nodes is rejected."""
        with pytest.raises(ValueError, match="takes 3 nodes"):
            eval_phi(SymbolPhi(2, H), NODES[:2])

    def test_invalid_parameters_rejected(self):
        """Test that order 0 and negative weights are rejected."""
        with pytest.raises(ValueError, match="order must be >= 1"):
            SymbolPhi(0, H)
        with pytest.raises(ValueError, match="non-negative"):
            SymbolPhi(2, H, m=-1)


class TestPhiGrid:
    @pytest.mark.parametrize("n, m, k", [(1, 0, 0), (1, 0, 3), (2, 1, 0), (2, 2, 1), (3, 1, 2), (4, 0, 1)])
    def test_matches_cubature(self, n, m, k):
        """Test the closed form against tensor Gauss-Legendre cubature."""
        sym = SymbolPhi(n, H, m, k)
        nodes = NODES[: n + 1]

        grid = phi_grid(sym, [np.asarray(z) for z in nodes])

        assert complex(grid) == pytest.approx(phi_quadrature(sym, nodes), rel=1e-11)

    def test_clustered_nodes_match_cubature(self):
        """Test a weighted symbol at nodes 1e-7 apart."""
        sym = SymbolPhi(3, H, 1, 2)
        nodes = [np.exp(1j * (0.4 + 1e-7 * i)) for i in range(4)]

        assert eval_phi(sym, nodes) == pytest.approx(phi_quadrature(sym, nodes), rel=1e-11)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_cubature_volume(self, n):
        """Test that the cubature of h = 1 gives the simplex volume 1/n!."""
        sym = SymbolPhi(n, Polynomial((1,)))

        assert phi_quadrature(sym, NODES[: n + 1]) == pytest.approx(1 / math.factorial(n))

    def test_cubature_node_count_checked(self):
        """Test that the wrong number of nodes is rejected."""
        with pytest.raises(ValueError, match="takes 2 nodes"):
            phi_quadrature(SymbolPhi(1, H), NODES[:3])

    def test_broadcasts_over_axes(self):
        """Test a two-axis grid against pointwise values."""
        lam = np.exp(1j * np.linspace(0.1, 6.0, 4))
        sym = SymbolPhi(2, H, 1, 1)

        grid = phi_grid(sym, [lam[:, None], lam[None, :], np.asarray(NODES[4])])

        for i in range(4):
            for j in range(4):
                expected = eval_phi(sym, [lam[i], lam[j], NODES[4]])
                assert grid[i, j] == pytest.approx(expected, rel=1e-11)

    def test_phi_hm_grid(self):
        """Test the two-variable grid against phi_hm."""
        lam = np.exp(1j * np.array([0.2, 1.5, 3.3]))

        grid = phi_hm_grid(H, 2, lam[:, None], lam[None, :])

        assert grid[0, 2] == pytest.approx(phi_hm(H, 2, lam[0], lam[2]), rel=1e-11)
        assert grid[1, 1] == pytest.approx(phi_hm(H, 2, lam[1], lam[1]), rel=1e-11)


class TestIdentities:
    @pytest.mark.parametrize("m", [0, 1, 3])
    def test_base_decomposition(self, m):
        """Test the decomposition of φ_{h,m} through an intermediate point."""
        residual = check_base_decomp(H, m, NODES[0], NODES[1], NODES[2])

        assert residual < 1e-11

    def test_base_decomposition_needs_distinct_ends(self):
        """Test that λ = μ is rejected."""
        with pytest.raises(ValueError, match="undefined"):
            check_base_decomp(H, 1, 1j, 0.5, 1j)

    @pytest.mark.parametrize("kind", ["tmh", "tkh"])
    @pytest.mark.parametrize("p", [1, 2, 4])
    def test_green_identities(self, kind, p):
        """Test both triangle reductions at a scaled corner."""
        rng = make_rng(3, "green", kind, p)
        lam, xi, mu = np.exp(2j * np.pi * rng.uniform(size=3))

        assert check_green_identities(kind, H, p, 0.7, lam, xi, mu) < 1e-11

    def test_green_identities_reject_bad_kappa(self):
        """Test that κ outside (0, 1] is rejected."""
        with pytest.raises(ValueError, match="must lie in"):
            check_green_identities("tmh", H, 1, 1.5, 1, 1j, -1)

    def test_green_identities_reject_unknown_kind(self):
        """Test that an unknown identity name is rejected."""
        with pytest.raises(ValueError, match="unknown identity"):
            check_green_identities("other", H, 1, 0.5, 1, 1j, -1)

    @pytest.mark.parametrize("part", ["i", "ii"])
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_order_lowering(self, part, n):
        """Test both order-lowering identities."""
        assert check_tmkh(part, n, H, 2, NODES[: n + 1]) < 1e-10

    def test_order_lowering_rejects_coincidence(self):
        """Test that part (i) requires λ_0 ≠ λ_1."""
        with pytest.raises(ValueError, match="λ_0 ≠ λ_1"):
            check_tmkh("i", 2, H, 1, [1, 1, 1j])


class TestDiagonalConstant:
    def test_known_values(self):
        """Test c_{n,m,k} for small parameters."""
        assert diagonal_constant(2, 2, 1) == pytest.approx(1 / 3)
        assert diagonal_constant(2, 1, 1) == pytest.approx(1 / 2)
        assert diagonal_constant(1, 1, 3) == pytest.approx(1 / 3)

    def test_diagonal_value(self):
        """Test φ_{n,h,m-1,k-1}(λ, …, λ) = c_{n,m,k} h(λ)."""
        lam = NODES[1]
        sym = SymbolPhi(3, H, 1, 2)

        value = eval_phi(sym, [lam] * 4)

        assert value == pytest.approx(diagonal_constant(3, 2, 3) * H(lam), rel=1e-12)
