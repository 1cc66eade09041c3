"""Gâteaux derivatives of ``t ↦ f(U_0 + tV)`` and Taylor remainders.

For a polynomial ``f`` the path ``f(U_t)`` is itself a polynomial in ``t``
with matrix coefficients. Those coefficients come from the recurrence
``C_{k,j} = C_{k−1,j} U_0 + C_{k−1,j−1} V`` with ``U_t^k = Σ_j t^j C_{k,j}``,
and every derivative, remainder and trace in this module is read off them.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.polynomial import legendre

from ssflab.moi import MoiSymbol, MultipleOperatorIntegral
from ssflab.numlin import (
    ContractionPair,
    Matrix,
    SpectralUnitary,
    as_matrix,
    make_rng,
    operator_norm,
    random_contraction_pair,
    schatten_norm,
)
from ssflab.poly import Polynomial, derivative, sup_norm_circle

logger = logging.getLogger(__name__)

# finite-difference steps by derivative order; higher orders lose more digits to cancellation
FD_STEPS = {1: 1e-4, 2: 1e-3}
FD_STEP_HIGH = 1e-2


def path_coefficients(u0: Matrix, v: Matrix, degree: int) -> list[list[Matrix]]:
    """``C[k][j]`` for ``0 ≤ j ≤ k ≤ degree``."""
    u0 = as_matrix(u0, name="u0")
    v = as_matrix(v, name="v")
    eye = np.eye(u0.shape[0], dtype=np.complex128)
    rows = [[eye]]
    for k in range(1, degree + 1):
        prev = rows[-1]
        row = [prev[0] @ u0]
        for j in range(1, k):
            row.append(prev[j] @ u0 + prev[j - 1] @ v)
        row.append(prev[k - 1] @ v)
        rows.append(row)
    return rows


def path_expansion(pair: ContractionPair, f: Polynomial) -> list[Matrix]:
    """Matrix coefficients ``P_j`` with ``f(U_0 + tV) = Σ_j t^j P_j``."""
    dim = pair.dim
    if f.is_zero:
        return [np.zeros((dim, dim), dtype=np.complex128)]
    rows = path_coefficients(pair.u0, pair.v, f.degree)
    out = [np.zeros((dim, dim), dtype=np.complex128) for _ in range(f.degree + 1)]
    for k, c in enumerate(f.coeffs):
        if c == 0:
            continue
        for j, term in enumerate(rows[k]):
            out[j] = out[j] + c * term
    return out


def derivative_from_expansion(expansion: Sequence[Matrix], n: int, t0: float) -> Matrix:
    out = np.zeros_like(expansion[0])
    for j in range(n, len(expansion)):
        out = out + (math.factorial(j) / math.factorial(j - n)) * t0 ** (j - n) * expansion[j]
    return out


def _check_t0(t0: float) -> None:
    if not 0.0 <= t0 <= 1.0:
        raise ValueError(f"t0 must lie in [0, 1], got {t0}")


def derivative_poly_path(pair: ContractionPair, f: Polynomial, n: int, t0: float = 0.0) -> Matrix:
    """``dⁿ/dtⁿ f(U_0 + tV)`` at ``t0``; ``n = 0`` gives ``f(U_{t0})``.

    Raises:
        ValueError: If ``n < 0`` or ``t0`` is outside ``[0, 1]``.
    """
    if n < 0:
        raise ValueError(f"derivative order must be >= 0, got {n}")
    _check_t0(t0)
    return derivative_from_expansion(path_expansion(pair, f), n, t0)


def derivative_moi(u0: SpectralUnitary, v: Matrix, f: Polynomial, n: int) -> Matrix:
    """``n! T_{f^{[n]}}(V, …, V)`` over the spectral measure of ``u0``, at ``t = 0``."""
    if not isinstance(u0, SpectralUnitary):
        raise TypeError("derivative_moi needs a unitary with spectral data")
    if n < 0:
        raise ValueError(f"derivative order must be >= 0, got {n}")
    v = as_matrix(v, name="v")
    if v.shape != (u0.dim, u0.dim):
        raise ValueError(f"v has shape {v.shape}, expected {(u0.dim, u0.dim)}")
    if n == 0:
        return u0.from_eigenbasis(np.diag(f(u0.points[u0.labels])))
    if f.degree < n:
        return np.zeros_like(v)
    op = MultipleOperatorIntegral(u0, MoiSymbol.divdiff(f, n))
    return math.factorial(n) * op(*([v] * n))


def _stencil(points: int, t0: float, step: float) -> np.ndarray:
    r = (points - 1) // 2
    if t0 - r * step >= 0.0 and t0 + r * step <= 1.0:
        return np.arange(-r, r + 1, dtype=np.float64)
    if t0 - r * step < 0.0:
        return np.arange(points, dtype=np.float64)
    return -np.arange(points, dtype=np.float64)[::-1]


def finite_difference_derivative(
    pair: ContractionPair,
    f: Polynomial,
    n: int,
    t0: float = 0.0,
    *,
    step: float | None = None,
    accuracy: int = 4,
) -> Matrix:
    """Finite-difference oracle for ``dⁿ/dtⁿ f(U_t)`` at ``t0``.

    Stencil weights solve the Vandermonde system ``Σ_i w_i o_i^j = n! δ_{jn}``.
    The stencil is central when it fits in ``[0, 1]`` and one-sided otherwise.
    """
    if n < 1:
        raise ValueError(f"finite differences need n >= 1, got {n}")
    _check_t0(t0)
    h = step if step is not None else FD_STEPS.get(n, FD_STEP_HIGH)
    points = n + accuracy
    points += 1 - points % 2
    offsets = _stencil(points, t0, h)
    vander = np.vander(offsets, increasing=True).T
    rhs = np.zeros(offsets.size)
    rhs[n] = math.factorial(n)
    weights = np.linalg.solve(vander, rhs)
    out = np.zeros((pair.dim, pair.dim), dtype=np.complex128)
    for w, o in zip(weights, offsets):
        out = out + w * f.matrix_value(pair.at(t0 + o * h))
    return out / h**n


def trace_identity_check(pair: ContractionPair, f: Polynomial, n: int, t0: float = 0.0) -> float:
    """``|tr dⁿ/dtⁿ f(U_t) − tr(d^{n−1}/dt^{n−1} f′(U_t) V)|`` at ``t0``."""
    if n < 1:
        raise ValueError(f"trace identity needs n >= 1, got {n}")
    lhs = np.trace(derivative_poly_path(pair, f, n, t0))
    rhs = np.trace(derivative_poly_path(pair, derivative(f, 1), n - 1, t0) @ pair.v)
    return float(abs(lhs - rhs))


def taylor_remainder(pair: ContractionPair, f: Polynomial, n: int) -> Matrix:
    """``R_n(f, U_0, V) = f(U_0 + V) − Σ_{j<n} (1/j!) dʲ/dtʲ f(U_t)|_{t=0}``."""
    if n < 0:
        raise ValueError(f"remainder order must be >= 0, got {n}")
    expansion = path_expansion(pair, f)
    out = f.matrix_value(pair.u1) if not f.is_zero else np.zeros((pair.dim, pair.dim), dtype=np.complex128)
    for j in range(min(n, len(expansion))):
        out = out - derivative_from_expansion(expansion, j, 0.0) / math.factorial(j)
    return out


def gauss_legendre_unit(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss–Legendre nodes and weights on ``[0, 1]``."""
    x, w = legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def remainder_via_integral(pair: ContractionPair, f: Polynomial, n: int) -> Matrix:
    """``(1/(n−1)!) ∫_0^1 (1−t)^{n−1} dⁿ/dtⁿ f(U_t) dt``.

    The integrand has degree at most ``deg f − 1`` in ``t``, so
    ``⌈deg f / 2⌉ + 1`` Gauss–Legendre nodes integrate it exactly.
    """
    if n < 1:
        raise ValueError(f"integral remainder needs n >= 1, got {n}")
    if f.degree < n:
        return np.zeros((pair.dim, pair.dim), dtype=np.complex128)
    expansion = path_expansion(pair, f)
    ts, ws = gauss_legendre_unit(math.ceil(f.degree / 2) + 1)
    out = np.zeros((pair.dim, pair.dim), dtype=np.complex128)
    for t, w in zip(ts, ws):
        out = out + w * (1.0 - t) ** (n - 1) * derivative_from_expansion(expansion, n, float(t))
    return out / math.factorial(n - 1)


def monomial_remainder_traces(pair: ContractionPair, n: int, count: int) -> list[complex]:
    """``tr R_n(z^k)`` for ``k = n, …, n + count − 1`` from one coefficient recurrence.

    ``R_n(z^k) = Σ_{j≥n} C_{k,j}``, so only the traces of the upper
    coefficients are summed.
    """
    if n < 0:
        raise ValueError(f"remainder order must be >= 0, got {n}")
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    top = n + count - 1
    u0, v = pair.u0, pair.v
    row = [np.eye(pair.dim, dtype=np.complex128)]
    out: list[complex] = []
    for k in range(top + 1):
        if k > 0:
            nxt = [row[0] @ u0]
            for j in range(1, k):
                nxt.append(row[j] @ u0 + row[j - 1] @ v)
            nxt.append(row[k - 1] @ v)
            row = nxt
        if k >= n:
            out.append(complex(sum(np.trace(row[j]) for j in range(n, k + 1))))
    return out


# ---------------------------------------------------------------------------
# Ratio experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RatioCell:
    """One (dim, trial) cell of the main-estimate experiment; ``r1`` is ``None`` in trace-only runs."""

    dim: int
    trial: int
    r1: float | None
    r2: float
    t0: float
    degf: int

    def as_row(self) -> dict[str, Any]:
        return {"dim": self.dim, "trial": self.trial, "r1": self.r1, "r2": self.r2, "t0": self.t0, "degf": self.degf}


@dataclass
class RatioReport:
    params: dict[str, Any]
    cells: list[RatioCell] = field(default_factory=list)

    def summary(self) -> dict[str, Any]:
        per_dim_max: dict[str, dict[str, float]] = {}
        quantiles: dict[str, dict[str, float]] = {}
        for dim in sorted({c.dim for c in self.cells}):
            cells = [c for c in self.cells if c.dim == dim]
            series = {"r2": np.array([c.r2 for c in cells])}
            if all(c.r1 is not None for c in cells):
                series = {"r1": np.array([c.r1 for c in cells]), **series}
            per_dim_max[str(dim)] = {name: float(values.max()) for name, values in series.items()}
            quantiles[str(dim)] = {
                f"{name}_q{int(q * 100)}": float(np.quantile(values, q))
                for name, values in series.items()
                for q in (0.5, 0.9)
            }
        return {"per_dim_max": per_dim_max, "quantiles": quantiles}

    def to_dict(self) -> dict[str, Any]:
        return {"params": self.params, "cells": [c.as_row() for c in self.cells], "summary": self.summary()}


def _ratio_cell(
    dim: int, trial: int, n: int, alpha: float, seed: int, max_degree: int, trace_only: bool = False
) -> RatioCell:
    rng = make_rng(seed, "main_estimate", dim, trial)
    pair = random_contraction_pair(dim, int(rng.integers(0, 2**31)))
    degf = int(rng.integers(n, max_degree + 1))
    f = Polynomial.random(rng, degf)
    t0 = float(rng.uniform(0.0, 1.0))
    return ratio_cell_for(pair, f, n, alpha, t0, dim=dim, trial=trial, trace_only=trace_only)


def ratio_cell_for(
    pair: ContractionPair,
    f: Polynomial,
    n: int,
    alpha: float,
    t0: float,
    *,
    dim: int | None = None,
    trial: int = 0,
    trace_only: bool = False,
) -> RatioCell:
    """Both ratios for one pair and polynomial at ``t0``; zero when ``f^{(n)}`` or ``V`` vanishes."""
    dim = pair.dim if dim is None else dim
    d = derivative_poly_path(pair, f, n, t0)
    f_sup = sup_norm_circle(derivative(f, n))
    v_n = schatten_norm(pair.v, n)
    if f_sup == 0.0 or v_n == 0.0:
        logger.info("cell dim=%d trial=%d has a vanishing normaliser; ratios set to 0", dim, trial)
        return RatioCell(dim, trial, None if trace_only else 0.0, 0.0, t0, f.degree)
    r2 = float(abs(np.trace(d))) / (f_sup * v_n**n)
    if trace_only:
        return RatioCell(dim, trial, None, r2, t0, f.degree)
    r1 = schatten_norm(d, alpha / n) / (f_sup * schatten_norm(pair.v, alpha) ** n)
    return RatioCell(dim, trial, r1, r2, t0, f.degree)


def main_estimate_experiment(
    dims: Sequence[int],
    n: int,
    alpha: float,
    trials: int,
    seed: int,
    *,
    trace_only: bool = False,
    max_degree: int = 16,
    executor: Executor | None = None,
) -> RatioReport:
    """Observed ratios ``r1`` (Schatten ``α/n`` bound) and ``r2`` (trace bound).

    ``r1 = ‖dⁿ f(U_t)‖_{α/n} / (‖f^{(n)}‖_∞ ‖V‖_α^n)`` and
    ``r2 = |tr dⁿ f(U_t)| / (‖f^{(n)}‖_∞ ‖V‖_n^n)`` at a random ``t0``. Only
    trends are reported; no constant is asserted. The norm variant needs
    ``α > n``. With ``trace_only`` only ``r2`` is measured, which already
    makes sense at ``α = n``.

    Raises:
        ValueError: If ``α ≤ n`` for the norm variant, ``α < n`` for the
            trace variant, or the sizes are invalid.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if trace_only and alpha < n:
        raise ValueError(f"the trace estimate needs α ≥ n, got α={alpha}, n={n}")
    if not trace_only and alpha <= n:
        raise ValueError(f"the norm estimate needs α > n, got α={alpha}, n={n}; use the trace variant for α = n")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if max_degree < n:
        raise ValueError(f"max_degree must be >= n, got {max_degree}")
    keys = [(d, t) for d in dims for t in range(trials)]
    args = [(d, t, n, alpha, seed, max_degree, trace_only) for d, t in keys]
    if executor is None:
        cells = [_ratio_cell(*a) for a in args]
    else:
        cells = list(executor.map(lambda a: _ratio_cell(*a), args))
    report = RatioReport(
        params={
            "dims": list(dims),
            "n": n,
            "alpha": alpha,
            "trials": trials,
            "seed": seed,
            "max_degree": max_degree,
            "trace_only": trace_only,
        },
        cells=sorted(cells, key=lambda c: (c.dim, c.trial)),
    )
    for dim, row in report.summary()["per_dim_max"].items():
        logger.debug("dim %s: max ratios %s", dim, ", ".join(f"{k}={v:.4g}" for k, v in row.items()))
    return report


def relative_error(a: Matrix, b: Matrix) -> float:
    """``‖a − b‖_∞ / max(1, ‖b‖_∞)``."""
    return operator_norm(a - b) / max(1.0, operator_norm(b))
