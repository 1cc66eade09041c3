"""Seeded verification suites behind ``ssflab verify``.

Each suite runs a number of independent instances and reports, per check,
the worst residual over all instances. Residuals of quantities that grow
with the polynomial degree are taken relative to ``max(1, |reference|)``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Any

import numpy as np

from ssflab import deriv, moi, ssf, symbols
from ssflab.config import RunConfig
from ssflab.numlin import (
    Matrix,
    discretize_unitary,
    make_rng,
    operator_norm,
    random_complex,
    random_contraction_pair,
    random_unitary,
    schatten_norm,
)
from ssflab.poly import (
    Polynomial,
    derivative,
    divided_difference,
    divided_difference_grid,
    divided_difference_monomial,
)
from ssflab.report import worst_residual

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCES: dict[str, dict[str, float]] = {
    "identities": {
        "moi_naive": 1e-10,
        "moi_linearity": 1e-11,
        "moi_additivity": 1e-11,
        "moi_adjoint": 1e-10,
        "moi_duality": 1e-10,
        "moi_product": 1e-10,
        "moi_composition": 1e-10,
        "truncation_parts": 1e-13,
        "diagonal_compression": 1e-12,
        "diagonal_average": 1e-11,
        "diagonal_bound": 1e-9,
        "route_moi": 1e-9,
        "route_finite_difference": 1e-6,
        "trace_identity": 1e-9,
        "remainder_integral": 1e-10,
        "discretization_bound": 1e-12,
    },
    "symbols": {
        "base_decomp": 1e-9,
        "green_tmh": 1e-9,
        "green_tkh": 1e-9,
        "tmkh_i": 1e-9,
        "tmkh_ii": 1e-9,
        "diagonal_constant": 1e-9,
        "divdiff_monomial": 1e-9,
        "divdiff_simplex": 1e-9,
        "divdiff_grid": 1e-9,
        "phi_grid": 1e-9,
    },
    "ssf": {
        "moment_batched": 1e-10,
        "round_trip": 1e-10,
        "trace_formula": 1e-8,
        "averaged_functional": 1e-10,
        "zero_perturbation": 1e-14,
    },
    "moi": {
        "moi_naive": 1e-10,
        "moi_adjoint": 1e-10,
        "moi_duality": 1e-10,
        "moi_additivity": 1e-11,
    },
}

# order constraints used for the region-restricted MOI checks, by operator count
_ORDER_REGIONS = {1: "j0<j1", 2: "j0<=j2<j1", 3: "j0<=j3"}


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return math.isfinite(self.residual) and self.residual <= self.tolerance

    def as_row(self) -> dict[str, Any]:
        return {
            "suite": self.suite,
            "name": self.name,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    instances: int
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def offenders(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    @property
    def max_residual(self) -> float:
        return worst_residual(c.residual for c in self.checks)

    def to_dict(self) -> dict[str, Any]:
        return {
            "suite": self.suite,
            "instances": self.instances,
            "passed": self.passed,
            "max_residual": self.max_residual,
            "checks": [c.as_row() for c in self.checks],
            "offenders": [c.name for c in self.offenders],
        }


def _rel(residual: float, reference: float) -> float:
    return residual / max(1.0, abs(reference))


def _circle(rng: np.random.Generator, count: int) -> list[complex]:
    return [complex(z) for z in np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=count))]


def _unit_matrices(rng: np.random.Generator, dim: int, count: int) -> list[Matrix]:
    out = []
    for _ in range(count):
        x = random_complex(rng, (dim, dim))
        out.append(x / operator_norm(x))
    return out


def _cell_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31))


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------


def _identity_instance(index: int, dim: int, seed: int) -> dict[str, float]:
    rng = make_rng(seed, "identities", index)
    out: dict[str, float] = {}
    d = min(dim, 8)
    unitary = random_unitary(d, _cell_seed(rng))
    f = Polynomial.random(rng, 6)
    g = Polynomial.random(rng, 5)
    xs = _unit_matrices(rng, d, 4)

    naive, adj, dual, add = [], [], [], []
    for n in (1, 2, 3):
        sym = moi.MoiSymbol.divdiff(f, n)
        region = moi.Region.order(_ORDER_REGIONS[n], n + 1)
        args = xs[:n]
        fast = moi.moi_apply(unitary, sym, region, args)
        naive.append(operator_norm(fast - moi.moi_apply_naive(unitary, sym, region, args)))
        adj.append(moi.adjoint_identity_check(unitary, sym, region, args))
        dual.append(moi.duality_identity_check(unitary, sym, region, xs[3], args))
        diag = moi.Region.diagonal(n + 1)
        add.append(moi.region_additivity_check(unitary, sym, diag, diag.complement(), args))
        add.append(moi.region_additivity_check(unitary, sym, region, region.complement(), args))
    out["moi_naive"] = worst_residual(naive)
    out["moi_adjoint"] = worst_residual(adj)
    out["moi_duality"] = worst_residual(dual)
    out["moi_additivity"] = worst_residual(add)

    a, b = complex(rng.standard_normal(), rng.standard_normal()), complex(rng.standard_normal(), rng.standard_normal())
    op = moi.MultipleOperatorIntegral(unitary, moi.MoiSymbol.divdiff(f, 2))
    mixed = op(a * xs[0] + b * xs[1], xs[2]) - a * op(xs[0], xs[2]) - b * op(xs[1], xs[2])
    out["moi_linearity"] = operator_norm(mixed)

    first = (moi.MoiSymbol.divdiff(f, 1), moi.Region.order("j0<j1", 2))
    second = (moi.MoiSymbol.divdiff(g, 2), moi.Region.full(3))
    out["moi_product"] = moi.product_identity_check(unitary, first, second, xs[:3])
    inner = (moi.MoiSymbol.divdiff(f, 2), moi.Region.order("j0<=j2", 3))
    outer = (moi.MoiSymbol.divdiff(g, 2), moi.Region.full(3))
    out["moi_composition"] = moi.composition_identity_check(unitary, inner, outer, xs[:3])

    grid = discretize_unitary(unitary, 6)
    parts = sum(moi.triangular_truncation(grid, xs[0], mode) for mode in ("strict_upper", "strict_lower", "diagonal"))
    out["truncation_parts"] = operator_norm(parts - xs[0])
    one3 = moi.MoiSymbol.constant(4)
    out["diagonal_compression"] = operator_norm(
        moi.diagonal_moi(unitary, one3, xs[:3]) - moi.diagonal_compression_product(unitary, xs[:3])
    )
    one2 = moi.MoiSymbol.constant(3)
    out["diagonal_average"] = operator_norm(
        moi.diagonal_moi(grid, one2, xs[:2]) - moi.diagonal_average(grid, xs[:2], 6)
    )
    delta = moi.diagonal_moi(unitary, one2, xs[:2])
    bound = schatten_norm(xs[0], 4.0) * schatten_norm(xs[1], 4.0)
    out["diagonal_bound"] = worst_residual([schatten_norm(delta, 2.0) - bound])

    pair = random_contraction_pair(min(dim, 16), _cell_seed(rng), unitary_u0=True)
    route, fd, trace, rem = [], [], [], []
    for n in (1, 2, 3):
        h = Polynomial.random(rng, int(rng.integers(n, 13)))
        path = deriv.derivative_poly_path(pair, h, n, 0.0)
        route.append(deriv.relative_error(deriv.derivative_moi(pair.spectral, pair.v, h, n), path))
        # stencils with more nodes than deg h are exact, so only round-off remains
        accuracy = max(4, h.degree - n + 1)
        fd_value = deriv.finite_difference_derivative(pair, h, n, 0.5, step=0.04, accuracy=accuracy)
        fd.append(deriv.relative_error(fd_value, deriv.derivative_poly_path(pair, h, n, 0.5)))
        t0 = float(rng.uniform(0.0, 1.0))
        scale = abs(np.trace(deriv.derivative_poly_path(pair, h, n, t0)))
        trace.append(_rel(deriv.trace_identity_check(pair, h, n, t0), scale))
        rem.append(deriv.relative_error(deriv.remainder_via_integral(pair, h, n), deriv.taylor_remainder(pair, h, n)))
    out["route_moi"] = worst_residual(route)
    out["route_finite_difference"] = worst_residual(fd)
    out["trace_identity"] = worst_residual(trace)
    out["remainder_integral"] = worst_residual(rem)

    u = random_unitary(d, _cell_seed(rng))
    gaps = []
    for N in (8, 32, 128):
        un = discretize_unitary(u, N)
        for k in range(1, 21):
            gap = operator_norm(u.power(k) - un.power(k))
            gaps.append(gap - 2 * math.pi * k / N)
    out["discretization_bound"] = worst_residual(gaps)
    return out


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------


def _symbols_instance(index: int, max_order: int, seed: int) -> dict[str, float]:
    rng = make_rng(seed, "symbols", index)
    out: dict[str, list[float]] = {}

    def record(name: str, value: float) -> None:
        out.setdefault(name, []).append(value)

    h = Polynomial.random(rng, int(rng.integers(0, 9)))
    lam, xi, mu = _circle(rng, 3)
    m = int(rng.integers(0, 5))
    record("base_decomp", symbols.check_base_decomp(h, m, lam, xi, mu))
    record("base_decomp", symbols.check_base_decomp(h, m, lam, lam, mu))
    record("base_decomp", symbols.check_base_decomp(h, m, lam, mu, mu))

    p = int(rng.integers(1, 5))
    kappa = float(rng.uniform(0.05, 1.0))
    record("green_tmh", symbols.check_green_identities("tmh", h, p, kappa, lam, xi, mu))
    record("green_tmh", symbols.check_green_identities("tmh", h, p, kappa, lam, lam, mu))
    record("green_tmh", symbols.check_green_identities("tmh", h, p, kappa, lam, mu, mu))
    record("green_tkh", symbols.check_green_identities("tkh", h, p, kappa, lam, xi, mu))
    record("green_tkh", symbols.check_green_identities("tkh", h, p, kappa, lam, xi, lam))
    record("green_tkh", symbols.check_green_identities("tkh", h, p, kappa, lam, xi, xi))

    for n in range(2, max_order + 1):
        nodes = _circle(rng, n + 1)
        record("tmkh_i", symbols.check_tmkh("i", n, h, p, nodes))
        record("tmkh_i", symbols.check_tmkh("i", n, h, p, [nodes[0], nodes[1], nodes[1], *nodes[3:]]))
        record("tmkh_ii", symbols.check_tmkh("ii", n, h, p, nodes))
        record("tmkh_ii", symbols.check_tmkh("ii", n, h, p, [nodes[1], *nodes[1:]]))
        k = int(rng.integers(1, 5))
        c = symbols.diagonal_constant(n, p, k)
        point = nodes[0]
        diag = symbols.eval_phi(symbols.SymbolPhi(n, h, p - 1, k - 1), [point] * (n + 1))
        record("diagonal_constant", abs(diag - c * complex(h(point))))

        sym = symbols.SymbolPhi(n, h, int(rng.integers(0, 4)), int(rng.integers(0, 4)))
        cubature = symbols.phi_quadrature(sym, nodes)
        record("phi_grid", _rel(abs(symbols.eval_phi(sym, nodes) - cubature), abs(cubature)))

    for n in range(1, 5):
        f = Polynomial.random(rng, int(rng.integers(n, 21)))
        nodes = _circle(rng, n + 1)
        if n >= 2:
            nodes[-1] = nodes[0]
        dd = divided_difference(f, nodes)
        via_monomials = sum(a * divided_difference_monomial(k, nodes) for k, a in enumerate(f.coeffs))
        record("divdiff_monomial", _rel(abs(dd - via_monomials), abs(dd)))
        simplex = symbols.eval_phi(symbols.SymbolPhi(n, derivative(f, n)), nodes)
        record("divdiff_simplex", _rel(abs(dd - simplex), abs(dd)))
        grid = complex(divided_difference_grid(f, nodes))
        record("divdiff_grid", _rel(abs(dd - grid), abs(dd)))
    return {name: worst_residual(values) for name, values in out.items()}


# ---------------------------------------------------------------------------
# ssf
# ---------------------------------------------------------------------------


def _ssf_instance(dim: int, n: int, K: int, samples: int, seed: int) -> dict[str, float]:
    pair = random_contraction_pair(dim, seed + 1000 * dim + n)
    out: dict[str, float] = {}

    batched = deriv.monomial_remainder_traces(pair, n, K)
    out["moment_batched"] = worst_residual(
        _rel(abs(batched[i] - ssf.remainder_moment(pair, n, n + i)), abs(batched[i])) for i in range(min(K, 4))
    )
    report = ssf.run_ssf_experiment(pair, n, K, samples=samples, seed=seed)
    out["round_trip"] = report.round_trip
    out["trace_formula"] = worst_residual(report.trace_residuals)

    rng = make_rng(seed, "ssf_averaged", dim, n)
    f = Polynomial.random(rng, K + n - 1)
    tr_rem = complex(np.trace(deriv.taylor_remainder(pair, f, n)))
    out["averaged_functional"] = _rel(abs(ssf.averaged_functional(pair, pair.v, n, f) - tr_rem), abs(tr_rem))

    zero = pair.with_perturbation(np.zeros_like(pair.v))
    out["zero_perturbation"] = worst_residual(abs(c) for c in ssf.reconstruct_ssf(zero, n, K).coefficients)
    return out


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------


def _merge(suite: str, results: Iterable[dict[str, float]], tolerance: float | None) -> tuple[CheckResult, ...]:
    worst: dict[str, float] = {}
    for result in results:
        for name, value in result.items():
            worst[name] = worst_residual([worst.get(name, 0.0), value])
    defaults = DEFAULT_TOLERANCES[suite]
    return tuple(
        CheckResult(suite, name, worst[name], tolerance if tolerance is not None else defaults[name])
        for name in sorted(worst)
    )


def _map(executor: Executor | None, fn: Callable[..., dict[str, float]], args: list[tuple[Any, ...]]) -> list[dict[str, float]]:
    if executor is None:
        return [fn(*a) for a in args]
    return list(executor.map(lambda a: fn(*a), args))


def run_suite(config: RunConfig, executor: Executor | None = None) -> SuiteReport:
    """Run the suite named by ``config.suite``."""
    suite = config.suite
    if suite == "identities":
        args = [(i, config.dim, config.seed) for i in range(config.trials)]
        results = _map(executor, _identity_instance, args)
    elif suite == "symbols":
        max_order = min(max(config.n, 2), 4)
        args = [(i, max_order, config.seed) for i in range(config.trials)]
        results = _map(executor, _symbols_instance, args)
    elif suite == "ssf":
        orders = range(1, min(config.n, 3) + 1)
        args = [(d, n, config.K, config.samples, config.seed) for d in config.dims for n in orders]
        results = _map(executor, _ssf_instance, args)
    else:
        raise ValueError(f"unknown suite {suite!r}")
    checks = _merge(suite, results, config.tolerance)
    logger.info("suite %s: %d instances, max residual %.3e", suite, len(args), worst_residual(c.residual for c in checks))
    return SuiteReport(suite, len(args), checks)


# ---------------------------------------------------------------------------
# single operator integral
# ---------------------------------------------------------------------------

# the direct projection sum visits dim^(n+1) tuples
NAIVE_MAX_DIM = 8


@dataclass(frozen=True)
class MoiEvaluation:
    symbol: str
    region: str
    n: int
    dim: int
    op_norm: float
    hs_norm: float
    report: SuiteReport

    def to_dict(self) -> dict[str, Any]:
        return {
            "symbol": self.symbol,
            "region": self.region,
            "n": self.n,
            "dim": self.dim,
            "op_norm": self.op_norm,
            "hs_norm": self.hs_norm,
            **self.report.to_dict(),
        }


def evaluate_moi(config: RunConfig, h: Polynomial | None = None) -> MoiEvaluation:
    """Apply ``T_φ^B`` named by ``config.symbol`` and ``config.region`` to seeded unit-norm arguments.

    The symbol acts on ``n`` operators of a random ``dim``-dimensional unitary.
    ``h`` defaults to a seeded degree-6 polynomial. The result is checked
    against the direct projection sum, the adjoint and duality identities and
    additivity over the region and its complement.

    Raises:
        ValueError: On a malformed symbol or region, or an arity mismatch.
    """
    arity = config.n + 1
    rng = make_rng(config.seed, "moi_command")
    if h is None:
        h = Polynomial.random(rng, 6)
    sym = moi.parse_symbol(config.symbol, arity, h)
    region = moi.parse_region(config.region, arity)
    unitary = random_unitary(config.dim, config.seed)
    xs = _unit_matrices(rng, config.dim, arity)
    args = xs[: config.n]

    value = moi.moi_apply(unitary, sym, region, args)
    out: dict[str, float] = {}
    if config.dim <= NAIVE_MAX_DIM:
        out["moi_naive"] = operator_norm(value - moi.moi_apply_naive(unitary, sym, region, args))
    out["moi_adjoint"] = moi.adjoint_identity_check(unitary, sym, region, args)
    out["moi_duality"] = moi.duality_identity_check(unitary, sym, region, xs[config.n], args)
    out["moi_additivity"] = moi.region_additivity_check(unitary, sym, region, region.complement(), args)

    report = SuiteReport("moi", 1, _merge("moi", [out], config.tolerance))
    logger.info(
        "moi %s on %s: ‖T‖_∞ %.4g, max residual %.3e", sym.label, region.label, operator_norm(value), report.max_residual
    )
    return MoiEvaluation(
        symbol=config.symbol,
        region=region.label,
        n=config.n,
        dim=config.dim,
        op_norm=operator_norm(value),
        hs_norm=schatten_norm(value, 2.0),
        report=report,
    )
