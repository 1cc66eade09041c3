"""Higher-order spectral shift functions from remainder traces.

The series ``η_n`` is stored through its negative Fourier coefficients only,
``η(e^{iθ}) = Σ_{j=1}^{K} c_j e^{−ijθ}``. Polynomials are paired with it
along the contour, ``⟨φ, η⟩ = ∫_0^{2π} φ(e^{iθ}) η(e^{iθ}) i e^{iθ} dθ``,
which gives ``⟨z^p, η⟩ = 2πi c_{p+1}``. Adding any function with only
non-negative frequencies leaves every such pairing unchanged.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ssflab.deriv import (
    derivative_from_expansion,
    gauss_legendre_unit,
    monomial_remainder_traces,
    path_expansion,
    taylor_remainder,
)
from ssflab.numlin import ContractionPair, Matrix, as_matrix, make_rng, schatten_norm
from ssflab.poly import Polynomial, derivative
from ssflab.report import worst_residual

logger = logging.getLogger(__name__)

PAIRING_POINTS = 2048
PAIRING_TOL = 1e-9
L1_POINTS = 4096


class ConventionFault(RuntimeError):
    """Raised when the closed-form pairing and the contour quadrature disagree."""


class InsufficientTruncationError(ValueError):
    """Raised when the truncated series cannot cover a test polynomial.

    Attributes:
        required: Smallest truncation ``K`` that covers the polynomial.
    """

    def __init__(self, message: str, required: int):
        super().__init__(message)
        self.required = required


@dataclass(frozen=True)
class SSFSeries:
    """Truncated anti-analytic representative of ``η_n``.

    ``coefficients[j-1]`` is ``c_j``, the coefficient of ``e^{−ijθ}``.
    """

    n: int
    K: int
    coefficients: tuple[complex, ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"order n must be >= 1, got {self.n}")
        if self.K < 1:
            raise ValueError(f"truncation K must be >= 1, got {self.K}")
        coeffs = tuple(complex(c) for c in self.coefficients)
        if len(coeffs) != self.K:
            raise ValueError(f"expected {self.K} coefficients, got {len(coeffs)}")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def max_degree(self) -> int:
        """Largest ``deg f`` whose trace formula the series covers."""
        return self.K + self.n - 1

    def coefficient(self, j: int) -> complex:
        return self.coefficients[j - 1] if 1 <= j <= self.K else 0j

    def density(self, theta: Any) -> Any:
        """``η(e^{iθ})`` on an array of angles."""
        theta = np.asarray(theta, dtype=np.float64)
        j = np.arange(1, self.K + 1)
        return np.exp(-1j * np.multiply.outer(theta, j)) @ np.array(self.coefficients)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "K": self.K,
            "coefficients": [[c.real, c.imag] for c in self.coefficients],
        }

    def rows(self) -> list[dict[str, Any]]:
        """CSV rows ``j, re, im``."""
        return [{"j": j, "re": c.real, "im": c.imag} for j, c in enumerate(self.coefficients, start=1)]


def remainder_moment(pair: ContractionPair, n: int, k: int) -> complex:
    """``tr R_n(z^k, U_0, V)``."""
    if k < 0:
        raise ValueError(f"monomial power must be >= 0, got {k}")
    return complex(np.trace(taylor_remainder(pair, Polynomial.monomial(k), n)))


def _moment_scale(n: int, k: int) -> float:
    """``(k − n)! / k!``."""
    return math.factorial(k - n) / math.factorial(k)


def series_from_moments(n: int, moments: Sequence[complex]) -> SSFSeries:
    """``c_{k−n+1} = (k−n)!/(2πi k!) tr R_n(z^k)`` for ``k = n, …, n + K − 1``."""
    coeffs = [_moment_scale(n, n + i) * complex(m) / (2j * math.pi) for i, m in enumerate(moments)]
    return SSFSeries(n, len(coeffs), tuple(coeffs))


def reconstruct_ssf(pair: ContractionPair, n: int, K: int) -> SSFSeries:
    """Series whose pairing with ``(z^k)^{(n)}`` reproduces ``tr R_n(z^k)``, ``k < n + K``."""
    if K < 1:
        raise ValueError(f"truncation K must be >= 1, got {K}")
    if n < 1:
        raise ValueError(f"order n must be >= 1, got {n}")
    series = series_from_moments(n, monomial_remainder_traces(pair, n, K))
    logger.debug("|c_j| decay: %s", ", ".join(f"{abs(c):.3g}" for c in series.coefficients))
    return series


def pairing_quadrature(phi: Polynomial, density: Callable[[Any], Any], points: int = PAIRING_POINTS) -> complex:
    """Trapezoidal ``∫_0^{2π} φ(e^{iθ}) η(e^{iθ}) i e^{iθ} dθ`` for any density."""
    theta = 2 * np.pi * np.arange(points) / points
    z = np.exp(1j * theta)
    values = np.asarray(phi(z)) * np.asarray(density(theta)) * 1j * z
    return complex(values.sum() * (2 * np.pi / points))


def pairing(phi: Polynomial, s: SSFSeries) -> complex:
    """``⟨φ, η⟩ = 2πi Σ_p a_p c_{p+1}``, confirmed by contour quadrature.

    Raises:
        ConventionFault: If the two evaluations differ by more than 1e-9
            relative to the size of the summed terms.
    """
    terms = [a * s.coefficient(p + 1) for p, a in enumerate(phi.coeffs)]
    closed = 2j * math.pi * complex(sum(terms))
    points = PAIRING_POINTS
    while points <= max(phi.degree, 0) + s.K + 1:
        points *= 2
    quad = pairing_quadrature(phi, s.density, points)
    scale = max(1.0, 2 * math.pi * sum(abs(a) * abs(c) for a, c in zip(phi.coeffs, s.coefficients)))
    if abs(closed - quad) > PAIRING_TOL * scale:
        raise ConventionFault(f"pairing disagreement {abs(closed - quad):.3e} between closed form and quadrature")
    return closed


def verify_trace_formula(pair: ContractionPair, n: int, f: Polynomial, K: int, series: SSFSeries | None = None) -> float:
    """``|tr R_n(f) − ⟨f^{(n)}, η_n⟩|`` relative to ``max(1, |tr R_n(f)|)``.

    Raises:
        InsufficientTruncationError: If ``deg f > K + n − 1``.
    """
    if f.degree > K + n - 1:
        required = f.degree - n + 1
        raise InsufficientTruncationError(
            f"K={K} covers degree <= {K + n - 1}, got degree {f.degree}; need K >= {required}",
            required=required,
        )
    series = series if series is not None else reconstruct_ssf(pair, n, K)
    if series.n != n or series.K < K:
        raise ValueError(f"series (n={series.n}, K={series.K}) does not match n={n}, K={K}")
    lhs = complex(np.trace(taylor_remainder(pair, f, n)))
    rhs = pairing(derivative(f, n), series)
    return abs(lhs - rhs) / max(1.0, abs(lhs))


def l1_estimate(s: SSFSeries, grid_points: int = L1_POINTS) -> float:
    """Arclength ``∫_0^{2π} |η(e^{iθ})| dθ`` of the truncated representative."""
    if grid_points < 1:
        raise ValueError(f"grid_points must be >= 1, got {grid_points}")
    theta = 2 * np.pi * np.arange(grid_points) / grid_points
    return float(np.abs(s.density(theta)).sum() * (2 * np.pi / grid_points))


def averaged_functional(pair: ContractionPair, w: Matrix, n: int, f: Polynomial) -> complex:
    """``(1/(n−1)!) ∫_0^1 (1−t)^{n−1} tr(d^{n−1}/dt^{n−1} f′(U_t) W) dt``.

    Gauss–Legendre with ``⌈deg f / 2⌉ + 1`` nodes is exact on the integrand.
    """
    if n < 1:
        raise ValueError(f"order n must be >= 1, got {n}")
    w = as_matrix(w, name="w")
    if w.shape != (pair.dim, pair.dim):
        raise ValueError(f"w has shape {w.shape}, expected {(pair.dim, pair.dim)}")
    df = derivative(f, 1)
    if f.degree < n:
        return 0j
    expansion = path_expansion(pair, df)
    ts, ws = gauss_legendre_unit(math.ceil(f.degree / 2) + 1)
    total = 0j
    for t, weight in zip(ts, ws):
        inner = derivative_from_expansion(expansion, n - 1, float(t)) @ w
        total += weight * (1.0 - t) ** (n - 1) * complex(np.trace(inner))
    return total / math.factorial(n - 1)


# ---------------------------------------------------------------------------
# Experiment
# ---------------------------------------------------------------------------


@dataclass
class SSFReport:
    """Series, checks and diagnostics of one reconstruction."""

    series: SSFSeries
    dim: int
    moments: list[complex]
    round_trip: float
    trace_residuals: list[float] = field(default_factory=list)
    l1: float = 0.0
    vnorm_n: float = 0.0

    @property
    def max_residual(self) -> float:
        return worst_residual([self.round_trip, *self.trace_residuals])

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.series.n,
            "K": self.series.K,
            "dim": self.dim,
            "coefficients": self.series.to_dict()["coefficients"],
            "l1_estimate": self.l1,
            "vnorm_n": self.vnorm_n,
            "moments": [[m.real, m.imag] for m in self.moments],
            "round_trip": self.round_trip,
            "trace_residuals": self.trace_residuals,
            "max_residual": self.max_residual,
        }


def run_ssf_experiment(
    pair: ContractionPair,
    n: int,
    K: int,
    *,
    samples: int = 20,
    seed: int = 0,
    check_degree: int | None = None,
) -> SSFReport:
    """Reconstruct ``η_n`` and check it.

    Runs the moment round trip and then the trace formula on ``samples``
    seeded random polynomials of degree at most ``check_degree``, which
    defaults to ``K + n − 1``.

    Raises:
        InsufficientTruncationError: If ``check_degree`` exceeds ``K + n − 1``.
    """
    degree = check_degree if check_degree is not None else K + n - 1
    if degree > K + n - 1:
        required = degree - n + 1
        raise InsufficientTruncationError(
            f"K={K} covers degree <= {K + n - 1}, got check degree {degree}; need K >= {required}",
            required=required,
        )
    moments = monomial_remainder_traces(pair, n, K)
    series = series_from_moments(n, moments)

    gaps = []
    for i, m in enumerate(moments):
        k = n + i
        paired = pairing(derivative(Polynomial.monomial(k), n), series)
        gaps.append(abs(paired - m) / max(1.0, abs(m)))
    round_trip = worst_residual(gaps)

    residuals = []
    for i in range(samples):
        rng = make_rng(seed, "ssf_poly", i)
        f = Polynomial.random(rng, int(rng.integers(0, degree + 1)))
        residuals.append(verify_trace_formula(pair, n, f, K, series))

    report = SSFReport(
        series=series,
        dim=pair.dim,
        moments=moments,
        round_trip=round_trip,
        trace_residuals=residuals,
        l1=l1_estimate(series),
        vnorm_n=schatten_norm(pair.v, n) ** n,
    )
    logger.info(
        "ssf n=%d K=%d: round trip %.2e, worst trace residual %.2e, L1 %.4g, ‖V‖_n^n %.4g",
        n,
        K,
        round_trip,
        worst_residual(residuals),
        report.l1,
        report.vnorm_n,
    )
    logger.debug("|c_j| decay: %s", ", ".join(f"{abs(c):.3g}" for c in series.coefficients))
    return report
