"""Symbol families φ_{h,m} and φ_{n,h,m,k} and the identities that reduce them.

``φ_{n,h,m,k}(λ_0, …, λ_n)`` integrates ``t^m s^k h(·)`` over the nested
simplex ``0 ≤ s ≤ t ≤ t_3 ≤ … ≤ t_n ≤ 1`` with the affine argument
``λ_n + (λ_{n-1} − λ_n) t_n + … + (λ_1 − λ_2) t + (λ_0 − λ_1) s``. For
``n = 1`` only ``s`` is present and ``m`` plays no role, so
``φ_{1,h,·,k}(λ_0, λ_1) = φ_{h,k}(λ_1, λ_0)``.

Values come from the barycentric closed form in :func:`phi_grid`, which
never expands powers of node differences. :func:`phi_quadrature` gives an
independent cubature value. All checks return absolute residuals.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
from numpy.polynomial import legendre

from ssflab.poly import (
    MultiPoly,
    Polynomial,
    binomial,
    complete_homogeneous,
    integrate_simplex,
)


@dataclass(frozen=True)
class SymbolPhi:
    """Parameters ``(n, h, m, k)`` of ``φ_{n,h,m,k}``."""

    n: int
    h: Polynomial
    m: int = 0
    k: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"symbol order must be >= 1, got {self.n}")
        if self.m < 0 or self.k < 0:
            raise ValueError(f"weights must be non-negative, got m={self.m}, k={self.k}")

    @property
    def arity(self) -> int:
        return self.n + 1


def _weight(n: int, m: int, k: int) -> MultiPoly:
    """``t^m s^k`` in the nested-simplex variables (``s^k`` alone when n = 1)."""
    w = MultiPoly.variable(n, 0, k)
    if n >= 2:
        w = w * MultiPoly.variable(n, 1, m)
    return w


def eval_phi(sym: SymbolPhi, nodes: Sequence[complex]) -> complex:
    """Value of ``φ_{n,h,m,k}`` at ``n + 1`` nodes."""
    if len(nodes) != sym.arity:
        raise ValueError(f"φ of order {sym.n} takes {sym.arity} nodes, got {len(nodes)}")
    return complex(phi_grid(sym, [complex(z) for z in nodes]))


def phi_hm(h: Polynomial, m: int, lam: complex, mu: complex) -> complex:
    """``φ_{h,m}(λ, μ) = ∫_0^1 t^m h(λ + (μ − λ)t) dt``."""
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    return complex(phi_hm_grid(h, m, complex(lam), complex(mu)))


def _rising(a: int, length: int) -> float:
    """``(a + length)! / a!``."""
    return float(math.prod(range(a + 1, a + length + 1)))


def phi_grid(sym: SymbolPhi, nodes: Sequence[Any]) -> Any:
    """``φ_{n,h,m,k}`` on broadcast arrays of nodes.

    Uses the barycentric form ``∫ (s_0 + s_1)^m s_0^k h(Σ s_i λ_i)`` and the
    Dirichlet moments ``∫ Π s_i^{b_i} = Π b_i! / (|b| + n)!``. Nodes
    ``λ_2 … λ_n`` then enter only through complete homogeneous sums.
    """
    n, h, m, k = sym.n, sym.h, sym.m, sym.k
    if len(nodes) != n + 1:
        raise ValueError(f"φ of order {n} takes {n + 1} nodes, got {len(nodes)}")
    lam0 = np.asarray(nodes[0], dtype=np.complex128)
    lam1 = np.asarray(nodes[1], dtype=np.complex128)
    shape = np.broadcast(*[np.asarray(x) for x in nodes]).shape
    out = np.zeros(shape, dtype=np.complex128)
    if h.is_zero:
        return out
    deg = h.degree
    if n == 1:
        m = 0
    extra = m + k + n
    # w_j = h_j j! / (j + m + k + n)!
    w = [h.coeffs[j] / _rising(j, extra) for j in range(deg + 1)]
    rest = complete_homogeneous(deg, list(nodes[2:]))
    # g_d = Σ_c w_{d+c} h_c(λ_2, …, λ_n)
    g = []
    for d in range(deg + 1):
        acc = np.zeros(shape, dtype=np.complex128)
        for c in range(deg - d + 1):
            if w[d + c] != 0:
                acc = acc + w[d + c] * rest[c]
        g.append(acc)
    pow0 = [np.ones_like(lam0)]
    pow1 = [np.ones_like(lam1)]
    for _ in range(deg):
        pow0.append(pow0[-1] * lam0)
        pow1.append(pow1[-1] * lam1)
    for b0 in range(deg + 1):
        for b1 in range(deg + 1 - b0):
            # A(b0, b1) = Σ_r C(m, r) (b0 + r + k)!/b0! · (b1 + m − r)!/b1!
            coeff = sum(binomial(m, r) * _rising(b0, r + k) * _rising(b1, m - r) for r in range(m + 1))
            out = out + coeff * pow0[b0] * pow1[b1] * g[b0 + b1]
    return out


def phi_hm_grid(h: Polynomial, m: int, lam: Any, mu: Any) -> Any:
    """``φ_{h,m}`` on broadcast arrays."""
    return phi_grid(SymbolPhi(1, h, 0, m), [mu, lam])


def phi_quadrature(sym: SymbolPhi, nodes: Sequence[complex], points: int | None = None) -> complex:
    """``φ_{n,h,m,k}`` by tensor Gauss–Legendre cubature.

    The nested simplex is mapped onto the unit cube by ``x_{n-1} = u_{n-1}``
    and ``x_i = u_i x_{i+1}`` with Jacobian ``Π_{i≥1} x_i``. The default rule
    integrates the polynomial integrand exactly.
    """
    n = sym.n
    if len(nodes) != n + 1:
        raise ValueError(f"φ of order {n} takes {n + 1} nodes, got {len(nodes)}")
    if points is None:
        points = max(1, (sym.h.degree + sym.m + sym.k + n) // 2 + 1)
    if points < 1:
        raise ValueError(f"points must be >= 1, got {points}")
    u, w = legendre.leggauss(points)
    u, w = 0.5 * (u + 1.0), 0.5 * w
    axes = np.meshgrid(*[u] * n, indexing="ij")
    weights = np.prod(np.meshgrid(*[w] * n, indexing="ij"), axis=0)
    xs = list(axes)
    for i in range(n - 2, -1, -1):
        xs[i] = axes[i] * xs[i + 1]
    jacobian = np.prod(xs[1:], axis=0) if n > 1 else 1.0
    lam = [complex(z) for z in nodes]
    arg = lam[n] + sum((lam[i] - lam[i + 1]) * xs[i] for i in range(n))
    weight = xs[0] ** sym.k * (xs[1] ** sym.m if n > 1 else 1.0)
    return complex(np.sum(weights * jacobian * weight * sym.h(arg)))


def check_base_decomp(h: Polynomial, m: int, lam: complex, xi: complex, mu: complex) -> float:
    """Residual of the decomposition of ``φ_{h,m}(λ, μ)`` through ``ξ``.

    ``φ_{h,m}(λ,μ) = a^{m+1} φ_{h,m}(λ,ξ) + b^{m+1} φ_{h,m}(ξ,μ)
    + Σ_{k<m} C(m,k) b^{k+1} a^{m-k} φ_{h,k}(ξ,μ)``
    with ``a = (ξ−λ)/(μ−λ)`` and ``b = (μ−ξ)/(μ−λ)``.

    Raises:
        ValueError: If ``λ = μ``.
    """
    if lam == mu:
        raise ValueError("λ = μ: decomposition undefined")
    a = (xi - lam) / (mu - lam)
    b = (mu - xi) / (mu - lam)
    lhs = phi_hm(h, m, lam, mu)
    rhs = a ** (m + 1) * phi_hm(h, m, lam, xi) + b ** (m + 1) * phi_hm(h, m, xi, mu)
    for k in range(m):
        rhs += binomial(m, k) * b ** (k + 1) * a ** (m - k) * phi_hm(h, k, xi, mu)
    return abs(lhs - rhs)


def _segment(h: Polynomial, q: int, base: complex, slope: complex, kappa: float) -> complex:
    """``∫_0^κ t^q h(base + slope·t) dt``."""
    return kappa ** (q + 1) * phi_hm(h, q, base, base + kappa * slope)


def check_green_identities(
    kind: Literal["tmh", "tkh"],
    h: Polynomial,
    m_or_k: int,
    kappa: float,
    lam: complex,
    xi: complex,
    mu: complex,
) -> float:
    """Residual of the two-variable reductions on the scaled triangle.

    ``tmh`` (λ ≠ μ)::

        ∫_0^κ∫_0^t t^{m-1} h(κξ + (μ−ξ)t + (λ−μ)s) ds dt
          = (1/m)((ξ−λ)/(μ−λ)) ∫_0^κ (κ^m − t^m) h(κξ + (λ−ξ)t) dt
          + (1/m)((μ−ξ)/(μ−λ)) ∫_0^κ (κ^m − t^m) h(κξ + (μ−ξ)t) dt

    ``tkh`` (λ ≠ ξ)::

        ∫_0^κ∫_0^t s^{k-1} h(κξ + (λ−ξ)t + (μ−λ)s) ds dt
          = (1/k)((μ−λ)/(ξ−λ)) ∫_0^κ t^k h(κλ + (μ−λ)t) dt
          − (1/k)((μ−ξ)/(ξ−λ)) ∫_0^κ t^k h(κξ + (μ−ξ)t) dt

    Raises:
        ValueError: On an excluded coincidence or parameters out of range.
    """
    if not 0 < kappa <= 1:
        raise ValueError(f"κ must lie in (0, 1], got {kappa}")
    if m_or_k < 1:
        raise ValueError(f"m/k must be >= 1, got {m_or_k}")
    p = m_or_k
    if kind == "tmh":
        if lam == mu:
            raise ValueError("tmh requires λ ≠ μ")
        lhs = kappa ** (p + 1) * eval_phi(SymbolPhi(2, h, p - 1, 0), [kappa * lam, kappa * mu, kappa * xi])

        def cap(slope: complex) -> complex:
            return kappa**p * _segment(h, 0, kappa * xi, slope, kappa) - _segment(h, p, kappa * xi, slope, kappa)

        rhs = ((xi - lam) / (mu - lam)) * cap(lam - xi)
        rhs += ((mu - xi) / (mu - lam)) * cap(mu - xi)
        return abs(lhs - rhs / p)
    if kind == "tkh":
        if lam == xi:
            raise ValueError("tkh requires λ ≠ ξ")
        lhs = kappa ** (p + 1) * eval_phi(SymbolPhi(2, h, 0, p - 1), [kappa * mu, kappa * lam, kappa * xi])
        rhs = ((mu - lam) / (xi - lam)) * _segment(h, p, kappa * lam, mu - lam, kappa)
        rhs -= ((mu - xi) / (xi - lam)) * _segment(h, p, kappa * xi, mu - xi, kappa)
        return abs(lhs - rhs / p)
    raise ValueError(f"unknown identity {kind!r}; expected 'tmh' or 'tkh'")


def check_tmkh(
    part: Literal["i", "ii"],
    n: int,
    h: Polynomial,
    m_or_k: int,
    nodes: Sequence[complex],
) -> float:
    """Residual of the order-lowering identities for ``φ_{n,h,m-1,0}`` and ``φ_{n,h,0,k-1}``.

    Part ``i`` needs ``λ_0 ≠ λ_1`` and part ``ii`` needs ``λ_1 ≠ λ_2``.
    """
    if n < 2:
        raise ValueError(f"order must be >= 2, got {n}")
    if m_or_k < 1:
        raise ValueError(f"m/k must be >= 1, got {m_or_k}")
    nodes = [complex(z) for z in nodes]
    if len(nodes) != n + 1:
        raise ValueError(f"expected {n + 1} nodes, got {len(nodes)}")
    p = m_or_k
    l0, l1, l2 = nodes[0], nodes[1], nodes[2]
    tail = nodes[2:]

    def phi(order: int, mm: int, kk: int, args: Sequence[complex]) -> complex:
        return eval_phi(SymbolPhi(order, h, mm, kk), args)

    if part == "i":
        if l0 == l1:
            raise ValueError("part (i) requires λ_0 ≠ λ_1")
        r = (l2 - l1) / (l1 - l0)
        lhs = phi(n, p - 1, 0, nodes)
        rhs = (1 + r) * (phi(n - 1, p, 0, [l0, *tail]) - phi(n - 1, 0, p, [l0, *tail]))
        rhs += r * (phi(n - 1, 0, p, [l1, *tail]) - phi(n - 1, p, 0, [l1, *tail]))
        return abs(lhs - rhs / p)
    if part == "ii":
        if l1 == l2:
            raise ValueError("part (ii) requires λ_1 ≠ λ_2")
        r = (l1 - l0) / (l2 - l1)
        lhs = phi(n, 0, p - 1, nodes)
        rhs = (1 + r) * phi(n - 1, 0, p, [l0, *tail])
        rhs -= r * phi(n - 1, 0, p, [l0, l1, *nodes[3:]])
        return abs(lhs - rhs / p)
    raise ValueError(f"unknown part {part!r}; expected 'i' or 'ii'")


def diagonal_constant(n: int, m: int, k: int) -> float:
    """``c_{n,m,k}`` with ``φ_{n,h,m-1,k-1}(λ, …, λ) = c_{n,m,k} h(λ)``."""
    if n < 1 or m < 1 or k < 1:
        raise ValueError(f"need n, m, k >= 1, got {(n, m, k)}")
    return integrate_simplex(_weight(n, m - 1, k - 1)).real
