"""Polynomials, divided differences and exact simplex integration."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt
from numpy.polynomial import polynomial as npoly
from scipy.optimize import minimize_scalar

from ssflab.numlin import Matrix, as_matrix

COINCIDENCE_TOL = 1e-12
# below this separation the Newton quotients lose too many digits
STABLE_GAP = 1e-6
SUP_GRID = 4096
SUP_REFINE = 8


def _trim(coeffs: Iterable[complex]) -> tuple[complex, ...]:
    out = [complex(c) for c in coeffs]
    while out and out[-1] == 0:
        out.pop()
    return tuple(out)


@dataclass(frozen=True)
class Polynomial:
    """Univariate complex polynomial; ``coeffs[i]`` multiplies ``z**i``.

    Trailing zeros are trimmed, so the zero polynomial has no coefficients
    and degree ``-1``.
    """

    coeffs: tuple[complex, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", _trim(self.coeffs))

    @classmethod
    def monomial(cls, k: int, c: complex = 1.0) -> Polynomial:
        if k < 0:
            raise ValueError(f"monomial power must be >= 0, got {k}")
        return cls((0,) * k + (c,))

    @classmethod
    def random(cls, rng: np.random.Generator, degree: int) -> Polynomial:
        """Complex Gaussian coefficients up to ``degree``."""
        raw = rng.standard_normal(degree + 1) + 1j * rng.standard_normal(degree + 1)
        return cls(tuple(raw / math.sqrt(2.0 * (degree + 1))))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def __call__(self, z: Any) -> Any:
        if self.is_zero:
            return np.zeros_like(np.asarray(z, dtype=np.complex128)) if np.ndim(z) else 0j
        return npoly.polyval(z, np.array(self.coeffs))

    def matrix_value(self, x: Matrix) -> Matrix:
        """``f(X)`` by Horner's rule."""
        x = as_matrix(x)
        eye = np.eye(x.shape[0], dtype=np.complex128)
        result = np.zeros_like(x)
        for c in reversed(self.coeffs):
            result = result @ x + c * eye
        return result

    def __add__(self, other: Polynomial) -> Polynomial:
        return Polynomial(tuple(npoly.polyadd(self._array(), other._array())))

    def __sub__(self, other: Polynomial) -> Polynomial:
        return Polynomial(tuple(npoly.polysub(self._array(), other._array())))

    def __mul__(self, other: Polynomial | complex) -> Polynomial:
        if isinstance(other, Polynomial):
            if self.is_zero or other.is_zero:
                return Polynomial()
            return Polynomial(tuple(npoly.polymul(self._array(), other._array())))
        return Polynomial(tuple(c * other for c in self.coeffs))

    __rmul__ = __mul__

    def _array(self) -> npt.NDArray[np.complex128]:
        return np.array(self.coeffs or (0j,), dtype=np.complex128)

    def to_json(self) -> list[list[float]]:
        return [[c.real, c.imag] for c in self.coeffs]

    @classmethod
    def from_json(cls, data: Sequence[Any]) -> Polynomial:
        """Read ``[[re, im], ...]``; bare numbers are accepted as real coefficients."""
        coeffs = []
        for item in data:
            if isinstance(item, (int, float)):
                coeffs.append(complex(item))
            elif isinstance(item, Sequence) and len(item) == 2:
                coeffs.append(complex(float(item[0]), float(item[1])))
            else:
                raise ValueError(f"bad polynomial coefficient {item!r}")
        return cls(tuple(coeffs))


def derivative(f: Polynomial, n: int) -> Polynomial:
    """n-th formal derivative."""
    if n < 0:
        raise ValueError(f"derivative order must be >= 0, got {n}")
    if n == 0:
        return f
    if n > f.degree:
        return Polynomial()
    return Polynomial(tuple(npoly.polyder(np.array(f.coeffs), n)))


def sup_norm_circle(f: Polynomial) -> float:
    """``max |f(e^{iθ})|`` from a uniform grid refined around its best points."""
    if f.is_zero:
        return 0.0
    theta = np.linspace(0.0, 2 * np.pi, SUP_GRID, endpoint=False)
    values = np.abs(f(np.exp(1j * theta)))
    best = float(values.max())
    step = 2 * np.pi / SUP_GRID
    for idx in np.argsort(values)[-SUP_REFINE:]:
        centre = float(theta[idx])
        res = minimize_scalar(
            lambda th: -abs(f(complex(math.cos(th), math.sin(th)))),
            bounds=(centre - step, centre + step),
            method="bounded",
            options={"xatol": 1e-12},
        )
        best = max(best, -float(res.fun))
    return best


# ---------------------------------------------------------------------------
# Multivariate polynomials and simplex integration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiPoly:
    """Sparse polynomial in ``nvars`` variables, keyed by exponent tuples."""

    nvars: int
    terms: Mapping[tuple[int, ...], complex]

    def __post_init__(self) -> None:
        clean = {}
        for exps, c in self.terms.items():
            if len(exps) != self.nvars:
                raise ValueError(f"exponent {exps} does not have {self.nvars} entries")
            if c != 0:
                clean[tuple(exps)] = complex(c)
        object.__setattr__(self, "terms", clean)

    @classmethod
    def constant(cls, nvars: int, c: complex) -> MultiPoly:
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, nvars: int, i: int, power: int = 1) -> MultiPoly:
        exps = [0] * nvars
        exps[i] = power
        return cls(nvars, {tuple(exps): 1.0})

    @classmethod
    def linear(cls, constant: complex, slopes: Sequence[complex]) -> MultiPoly:
        """``constant + Σ slopes[i] x_i``."""
        nvars = len(slopes)
        terms: dict[tuple[int, ...], complex] = {(0,) * nvars: constant}
        for i, a in enumerate(slopes):
            exps = [0] * nvars
            exps[i] = 1
            terms[tuple(exps)] = a
        return cls(nvars, terms)

    def _check(self, other: MultiPoly) -> None:
        if other.nvars != self.nvars:
            raise ValueError(f"variable count mismatch: {self.nvars} vs {other.nvars}")

    def __add__(self, other: MultiPoly | complex) -> MultiPoly:
        if not isinstance(other, MultiPoly):
            other = MultiPoly.constant(self.nvars, other)
        self._check(other)
        out = dict(self.terms)
        for exps, c in other.terms.items():
            out[exps] = out.get(exps, 0) + c
        return MultiPoly(self.nvars, out)

    def __mul__(self, other: MultiPoly | complex) -> MultiPoly:
        if not isinstance(other, MultiPoly):
            return MultiPoly(self.nvars, {e: c * other for e, c in self.terms.items()})
        self._check(other)
        out: dict[tuple[int, ...], complex] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                out[key] = out.get(key, 0) + c1 * c2
        return MultiPoly(self.nvars, out)

    __rmul__ = __mul__


def integrate_simplex(p: MultiPoly, upper: float = 1.0, *, nvars: int | None = None) -> complex:
    """Exact integral over the nested simplex ``0 ≤ x_0 ≤ x_1 ≤ … ≤ x_{n-1} ≤ upper``.

    Variable ``x_0`` is ``s``, ``x_1`` is ``t`` and ``x_i`` is ``t_{i+1}``.
    Integrating the innermost variable up to the next one by the power rule,
    then repeating outwards, maps a monomial ``Π x_i^{a_i}`` to
    ``upper^{Σa + n} · Π_i 1 / (a_0 + … + a_i + i + 1)``.

    Raises:
        ValueError: If ``nvars`` is given and differs from ``p.nvars``.
    """
    if nvars is not None and p.nvars != nvars:
        raise ValueError(f"expected a polynomial in {nvars} variables, got {p.nvars}")
    total = 0j
    for exps, c in p.terms.items():
        denom = 1.0
        partial = 0
        for i, a in enumerate(exps):
            partial += a
            denom *= partial + i + 1
        total += c * upper ** (partial + p.nvars) / denom
    return total


# ---------------------------------------------------------------------------
# Divided differences
# ---------------------------------------------------------------------------


def _clusters(nodes: Sequence[complex]) -> list[tuple[complex, int]]:
    reps: list[list[Any]] = []
    for z in nodes:
        for rep in reps:
            if abs(z - rep[0]) <= COINCIDENCE_TOL:
                rep[1] += 1
                break
        else:
            reps.append([z, 1])
    return [(z, count) for z, count in reps]


def divided_difference(f: Polynomial, nodes: Sequence[complex]) -> complex:
    """``f^{[n]}(λ_0, …, λ_n)`` by a confluent Newton table.

    Nodes closer than 1e-12 are merged and routed through the derivative
    branch ``f^{(j)}(λ)/j!``. Node order is free since ``f^{[n]}`` is
    symmetric. When distinct clusters sit closer than 1e-6 the quotients
    would cancel, so ``Σ_j c_{j+n} h_j(λ_0, …, λ_n)`` is summed instead.
    """
    nodes = [complex(z) for z in nodes]
    if not nodes:
        raise ValueError("at least one node is required")
    n = len(nodes) - 1
    if f.degree < n:
        return 0j
    clusters = _clusters(nodes)
    reps = [z for z, _ in clusters]
    if len(reps) > 1:
        gap = min(abs(a - b) for i, a in enumerate(reps) for b in reps[i + 1 :])
        if gap < STABLE_GAP:
            return complex(divided_difference_grid(f, nodes))
    ordered = [z for z, count in clusters for _ in range(count)]

    taylor: dict[tuple[complex, int], complex] = {}

    def taylor_coeff(z: complex, j: int) -> complex:
        key = (z, j)
        if key not in taylor:
            taylor[key] = complex(derivative(f, j)(z)) / math.factorial(j)
        return taylor[key]

    column = [complex(f(z)) for z in ordered]
    for j in range(1, n + 1):
        nxt = []
        for i in range(n + 1 - j):
            a, b = ordered[i], ordered[i + j]
            if a == b:
                nxt.append(taylor_coeff(a, j))
            else:
                nxt.append((column[i + 1] - column[i]) / (b - a))
        column = nxt
    return column[0]


def complete_homogeneous(degree: int, nodes: Sequence[Any]) -> list[Any]:
    """``[h_0, …, h_degree]`` of the (broadcastable) nodes.

    One pass per node of ``H[j] += x·H[j-1]`` for ascending ``j``.
    """
    if degree < 0:
        return []
    shape = np.broadcast(*[np.asarray(x) for x in nodes]).shape if nodes else ()
    ones = np.ones(shape, dtype=np.complex128) if shape else 1 + 0j
    zeros = np.zeros(shape, dtype=np.complex128) if shape else 0j
    table = [ones] + [zeros] * degree
    for x in nodes:
        for j in range(1, degree + 1):
            table[j] = table[j] + x * table[j - 1]
    return table


def divided_difference_monomial(k: int, nodes: Sequence[complex]) -> complex:
    """``(z^k)^{[n]}`` as the sum over compositions ``k_0 + … + k_n = k − n``."""
    if k < 0:
        raise ValueError(f"monomial power must be >= 0, got {k}")
    n = len(nodes) - 1
    if k < n:
        return 0j
    return complex(complete_homogeneous(k - n, [complex(z) for z in nodes])[k - n])


def divided_difference_grid(f: Polynomial, nodes: Sequence[Any]) -> Any:
    """``f^{[n]}`` on broadcast arrays of nodes, ``Σ_j c_{j+n} h_j``."""
    n = len(nodes) - 1
    shape = np.broadcast(*[np.asarray(x) for x in nodes]).shape
    if f.degree < n:
        return np.zeros(shape, dtype=np.complex128)
    table = complete_homogeneous(f.degree - n, nodes)
    out = np.zeros(shape, dtype=np.complex128)
    for j, h in enumerate(table):
        out = out + f.coeffs[j + n] * h
    return out


def binomial(m: int, k: int) -> int:
    """Exact ``C(m, k)``; zero outside ``0 ≤ k ≤ m``."""
    if not 0 <= k <= m:
        return 0
    return math.comb(m, k)
