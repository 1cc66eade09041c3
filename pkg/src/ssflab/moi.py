"""Multiple operator integrals over discrete spectral measures.

``T_φ^B(x_1, …, x_n) = Σ_{(j_0,…,j_n) ∈ B} φ(z_{j_0}, …, z_{j_n}) E_{j_0} x_1 E_{j_1} ⋯ x_n E_{j_n}``

Evaluation rotates every ``x_i`` into the eigenbasis of the spectral data.
Each projection ``E_j`` is then a sum of coordinate projections, so the
whole sum is a scalar multiply-accumulate over basis-column tuples
``(c_0, …, c_n)``. The symbol is evaluated at ``z_{labels[c_i]}`` and the
region at ``labels[c_i]``. Rows ``c_0`` are processed one at a time.
"""

from __future__ import annotations

import itertools
import logging
import math
import re
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
import numpy.typing as npt

from ssflab.numlin import (
    Matrix,
    SpectralUnitary,
    adjoint,
    as_matrix,
    make_rng,
    operator_norm,
    random_complex,
    random_unitary,
    schatten_norm,
)
from ssflab.poly import Polynomial, derivative, divided_difference_grid, integrate_simplex, sup_norm_circle
from ssflab.symbols import SymbolPhi, _weight, phi_grid

logger = logging.getLogger(__name__)

# cap on the number of basis columns per arity
COLUMN_BUDGET = {2: 64, 3: 64, 4: 64, 5: 32}
# symbol tensors up to this many entries are kept in memory
TENSOR_CACHE_LIMIT = 2**21

SymbolFn = Callable[..., Any]
Predicate = Callable[[Sequence[Any], npt.NDArray[np.complex128]], Any]


class BudgetExceededError(ValueError):
    """Raised when an MOI would exceed the evaluation budget."""


# ---------------------------------------------------------------------------
# Symbols
# ---------------------------------------------------------------------------


def _phase(z: Any, w: Any) -> tuple[Any, Any]:
    """``(z − w)/|z − w|`` with 0 on coincident points, plus the coincidence mask."""
    diff = np.asarray(z, dtype=np.complex128) - np.asarray(w, dtype=np.complex128)
    mod = np.abs(diff)
    same = mod == 0
    return np.where(same, 0, diff / np.where(same, 1, mod)), same


@dataclass(frozen=True)
class MoiSymbol:
    """Bounded function on ``T^{arity}``, evaluated on broadcast arrays.

    ``bound`` is a certified upper bound of ``|φ|`` on the torus.
    """

    arity: int
    fn: SymbolFn = field(repr=False)
    bound: float
    label: str

    def __call__(self, *points: Any) -> Any:
        if len(points) != self.arity:
            raise ValueError(f"symbol {self.label} takes {self.arity} points, got {len(points)}")
        return self.fn(*points)

    @classmethod
    def constant(cls, arity: int, c: complex = 1.0) -> MoiSymbol:
        def fn(*z: Any) -> Any:
            shape = np.broadcast(*[np.asarray(p) for p in z]).shape
            return np.full(shape, complex(c))

        return cls(arity, fn, abs(c), f"const:{c}")

    @classmethod
    def divdiff(cls, f: Polynomial, n: int) -> MoiSymbol:
        """``f^{[n]}``; bounded by ``‖f^{(n)}‖_∞ / n!``."""
        bound = sup_norm_circle(derivative(f, n)) / math.factorial(n)
        return cls(n + 1, lambda *z: divided_difference_grid(f, z), bound, f"divdiff:{n}")

    @classmethod
    def phi(cls, sym: SymbolPhi) -> MoiSymbol:
        """``φ_{n,h,m,k}``; bounded by ``‖h‖_∞ ∫ t^m s^k``."""
        bound = sup_norm_circle(sym.h) * integrate_simplex(_weight(sym.n, sym.m, sym.k)).real
        return cls(sym.arity, lambda *z: phi_grid(sym, z), bound, f"phi:{sym.n},{sym.m},{sym.k}")

    @classmethod
    def phi_hm(cls, h: Polynomial, m: int) -> MoiSymbol:
        """Two-variable ``φ_{h,m}(λ, μ)``."""
        sym = SymbolPhi(1, h, 0, m)
        bound = sup_norm_circle(h) / (m + 1)
        return cls(2, lambda lam, mu: phi_grid(sym, [mu, lam]), bound, f"phi_hm:{m}")

    @classmethod
    def psi(cls, m: int) -> MoiSymbol:
        """``((z − w)/|z − w|)^m`` for signed ``m``; zero on coincident points unless ``m = 0``."""

        def fn(z: Any, w: Any) -> Any:
            phase, same = _phase(z, w)
            if m == 0:
                return np.ones(np.shape(phase), dtype=np.complex128)
            safe = np.where(same, 1, phase)
            return np.where(same, 0, safe ** abs(m) if m > 0 else np.conj(safe) ** abs(m))

        return cls(2, fn, 1.0, f"psi:{m}")

    @classmethod
    def gamma(cls, s: float) -> MoiSymbol:
        """``|z − w|^{is}``; zero on coincident points unless ``s = 0``."""

        def fn(z: Any, w: Any) -> Any:
            mod = np.abs(np.asarray(z, dtype=np.complex128) - np.asarray(w, dtype=np.complex128))
            if s == 0:
                return np.ones(np.shape(mod), dtype=np.complex128)
            same = mod == 0
            return np.where(same, 0, np.exp(1j * s * np.log(np.where(same, 1, mod))))

        return cls(2, fn, 1.0, f"gamma:{s}")

    def times(self, other: MoiSymbol) -> MoiSymbol:
        """Pointwise product of two symbols of the same arity."""
        if other.arity != self.arity:
            raise ValueError(f"arity mismatch: {self.arity} vs {other.arity}")
        return MoiSymbol(
            self.arity,
            lambda *z: self.fn(*z) * other.fn(*z),
            self.bound * other.bound,
            f"{self.label}*{other.label}",
        )

    def conjugate_reversed(self) -> MoiSymbol:
        """``φ̄(λ_0, …, λ_n) = conj φ(λ_n, …, λ_0)``."""
        return MoiSymbol(self.arity, lambda *z: np.conj(self.fn(*z[::-1])), self.bound, f"bar({self.label})")

    def cyclic(self) -> MoiSymbol:
        """``φ*(μ_0, …, μ_n) = φ(μ_1, …, μ_n, μ_0)``."""
        return MoiSymbol(self.arity, lambda *z: self.fn(*z[1:], z[0]), self.bound, f"star({self.label})")

    def tensor(self, other: MoiSymbol) -> MoiSymbol:
        """``ψ(λ_0, …, λ_n) = φ_1(λ_0, …, λ_k) φ_2(λ_k, …, λ_n)``."""
        k = self.arity - 1
        return MoiSymbol(
            self.arity + other.arity - 1,
            lambda *z: self.fn(*z[: k + 1]) * other.fn(*z[k:]),
            self.bound * other.bound,
            f"{self.label}(x){other.label}",
        )

    def compose(self, other: MoiSymbol) -> MoiSymbol:
        """``ψ(λ_0, …, λ_n) = φ_1(λ_0, …, λ_k) φ_2(λ_0, λ_k, …, λ_n)``."""
        k = self.arity - 1
        return MoiSymbol(
            self.arity + other.arity - 2,
            lambda *z: self.fn(*z[: k + 1]) * other.fn(z[0], *z[k:]),
            self.bound * other.bound,
            f"{other.label}o{self.label}",
        )


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------

_ORDER_TOKEN = re.compile(r"\s*(j\d+|<=|>=|==|!=|<|>)")
_OPS: dict[str, Callable[[Any, Any], Any]] = {
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
    "==": np.equal,
    "!=": np.not_equal,
}


def arc_index(points: npt.NDArray[np.complex128], count: int) -> npt.NDArray[np.int64]:
    """Arc ``k`` with ``arg z ∈ [2πk/count, 2π(k+1)/count)``, arguments taken in ``[0, 2π)``."""
    angles = np.mod(np.angle(points), 2 * np.pi)
    return np.minimum((angles * count / (2 * np.pi)).astype(np.int64), count - 1)


@dataclass(frozen=True)
class Region:
    """Index region ``B`` for tuples ``(j_0, …, j_n)`` of spectral groups.

    ``predicate(idx, points)`` receives broadcastable integer arrays of group
    indices and the spectral points. ``None`` means the full product.
    """

    arity: int
    predicate: Predicate | None = field(default=None, repr=False)
    label: str = "full"

    def mask(self, idx: Sequence[Any], points: npt.NDArray[np.complex128]) -> Any:
        if len(idx) != self.arity:
            raise ValueError(f"region {self.label} has arity {self.arity}, got {len(idx)} indices")
        shape = np.broadcast(*[np.asarray(i) for i in idx]).shape
        if self.predicate is None:
            return np.ones(shape, dtype=bool)
        return np.broadcast_to(np.asarray(self.predicate(idx, points), dtype=bool), shape)

    def full_mask(self, unitary: SpectralUnitary) -> npt.NDArray[np.bool_]:
        return self.mask(_index_grid(unitary.size, self.arity), unitary.points)

    @property
    def is_full(self) -> bool:
        return self.predicate is None

    @classmethod
    def full(cls, arity: int) -> Region:
        return cls(arity)

    @classmethod
    def empty(cls, arity: int) -> Region:
        return cls(arity, lambda idx, pts: False, "empty")

    @classmethod
    def diagonal(cls, arity: int) -> Region:
        """``A_0``: all indices equal."""

        def pred(idx: Sequence[Any], pts: Any) -> Any:
            out = np.asarray(True)
            for i in idx[1:]:
                out = out & (np.asarray(i) == np.asarray(idx[0]))
            return out

        return cls(arity, pred, "diagonal")

    @classmethod
    def order(cls, expr: str, arity: int) -> Region:
        """Chained comparisons such as ``"j0<=j2<j1"``."""
        tokens = _ORDER_TOKEN.findall(expr)
        if "".join(tokens) != re.sub(r"\s+", "", expr) or len(tokens) < 3 or len(tokens) % 2 == 0:
            raise ValueError(f"malformed order constraint {expr!r}")
        variables = tokens[0::2]
        ops = tokens[1::2]
        if any(not v.startswith("j") for v in variables) or any(op not in _OPS for op in ops):
            raise ValueError(f"malformed order constraint {expr!r}")
        positions = [int(v[1:]) for v in variables]
        if max(positions) >= arity:
            raise ValueError(f"order constraint {expr!r} names an index beyond arity {arity}")

        def pred(idx: Sequence[Any], pts: Any) -> Any:
            out = np.asarray(True)
            for a, op, b in zip(positions, ops, positions[1:]):
                out = out & _OPS[op](np.asarray(idx[a]), np.asarray(idx[b]))
            return out

        return cls(arity, pred, f"order:{expr}")

    @classmethod
    def arcs(cls, ks: Sequence[int], count: int | None = None) -> Region:
        """``Q_{k_0} × … × Q_{k_n}`` for arcs splitting the circle into ``count`` pieces.

        ``count`` defaults to ``n + 2``.
        """
        arity = len(ks)
        count = count if count is not None else arity + 1
        if any(not 0 <= k < count for k in ks):
            raise ValueError(f"arc indices {list(ks)} out of range for {count} arcs")

        def pred(idx: Sequence[Any], pts: Any) -> Any:
            arc = arc_index(pts, count)
            out = np.asarray(True)
            for i, k in zip(idx, ks):
                out = out & (arc[np.asarray(i)] == k)
            return out

        return cls(arity, pred, f"arcs:{','.join(map(str, ks))}/{count}")

    @classmethod
    def arc_union(cls, ks: Sequence[int], count: int, arity: int) -> Region:
        """All indices in ``Q_{k} ∪ …`` for the listed arcs."""
        allowed = np.array(sorted(set(ks)))

        def pred(idx: Sequence[Any], pts: Any) -> Any:
            inside = np.isin(arc_index(pts, count), allowed)
            out = np.asarray(True)
            for i in idx:
                out = out & inside[np.asarray(i)]
            return out

        return cls(arity, pred, f"arcunion:{','.join(map(str, ks))}/{count}")

    @classmethod
    def block(cls, rows: Iterable[int] | None, cols: Iterable[int] | None) -> Region:
        """``B × C`` for two-variable transforms; ``None`` means every index."""
        row_set = None if rows is None else np.array(sorted(set(rows)), dtype=np.int64)
        col_set = None if cols is None else np.array(sorted(set(cols)), dtype=np.int64)
        if row_set is None and col_set is None:
            return cls.full(2)

        def pred(idx: Sequence[Any], pts: Any) -> Any:
            out = np.asarray(True)
            if row_set is not None:
                out = out & np.isin(np.asarray(idx[0]), row_set)
            if col_set is not None:
                out = out & np.isin(np.asarray(idx[1]), col_set)
            return out

        return cls(2, pred, "block")

    @classmethod
    def from_indices(cls, tuples: Iterable[Sequence[int]], arity: int) -> Region:
        members = {tuple(int(j) for j in t) for t in tuples}
        if any(len(t) != arity for t in members):
            raise ValueError(f"index tuples must have length {arity}")

        def pred(idx: Sequence[Any], pts: Any) -> Any:
            shape = np.broadcast(*[np.asarray(i) for i in idx]).shape
            grids = [np.broadcast_to(np.asarray(i), shape) for i in idx]
            out = np.zeros(shape, dtype=bool)
            for pos in np.ndindex(*shape):
                out[pos] = tuple(int(g[pos]) for g in grids) in members
            return out

        return cls(arity, pred, f"set[{len(members)}]")

    @classmethod
    def sign_pattern(cls, eps: Sequence[int]) -> Region:
        """``K_ε``: ``j_{i-1} ≤ j_i`` where ``ε_i = 1`` and ``j_{i-1} > j_i`` where ``ε_i = −1``."""
        if any(e not in (-1, 1) for e in eps):
            raise ValueError(f"sign pattern entries must be ±1, got {list(eps)}")

        def pred(idx: Sequence[Any], pts: Any) -> Any:
            out = np.asarray(True)
            for i, e in enumerate(eps, start=1):
                a, b = np.asarray(idx[i - 1]), np.asarray(idx[i])
                out = out & (a <= b if e == 1 else a > b)
            return out

        return cls(len(eps) + 1, pred, f"K{tuple(eps)}")

    def _combine(self, other: Region, op: Callable[[Any, Any], Any], name: str) -> Region:
        if other.arity != self.arity:
            raise ValueError(f"arity mismatch: {self.arity} vs {other.arity}")
        return Region(
            self.arity,
            lambda idx, pts: op(self.mask(idx, pts), other.mask(idx, pts)),
            f"({self.label}){name}({other.label})",
        )

    def union(self, other: Region) -> Region:
        return self._combine(other, np.logical_or, "|")

    def intersection(self, other: Region) -> Region:
        return self._combine(other, np.logical_and, "&")

    def complement(self) -> Region:
        return Region(self.arity, lambda idx, pts: ~self.mask(idx, pts), f"~({self.label})")

    def reversed(self) -> Region:
        """``B̄``: ``(λ_0, …, λ_n) ∈ B̄`` iff ``(λ_n, …, λ_0) ∈ B``."""
        return Region(self.arity, lambda idx, pts: self.mask(list(idx)[::-1], pts), f"bar({self.label})")

    def cyclic(self) -> Region:
        """``B*``: ``(μ_0, …, μ_n) ∈ B*`` iff ``(μ_1, …, μ_n, μ_0) ∈ B``."""
        return Region(self.arity, lambda idx, pts: self.mask([*idx[1:], idx[0]], pts), f"star({self.label})")

    def tensor(self, other: Region) -> Region:
        """``B̃`` for products: ``(λ_0..λ_k) ∈ B_1`` and ``(λ_k..λ_n) ∈ B_2``."""
        k = self.arity - 1
        return Region(
            self.arity + other.arity - 1,
            lambda idx, pts: self.mask(idx[: k + 1], pts) & other.mask(idx[k:], pts),
            f"({self.label})(x)({other.label})",
        )

    def compose(self, other: Region) -> Region:
        """``B̃`` for compositions: ``(λ_0..λ_k) ∈ B_1`` and ``(λ_0, λ_k..λ_n) ∈ B_2``."""
        k = self.arity - 1
        return Region(
            self.arity + other.arity - 2,
            lambda idx, pts: self.mask(idx[: k + 1], pts) & other.mask([idx[0], *idx[k:]], pts),
            f"({other.label})o({self.label})",
        )


def _index_grid(size: int, arity: int) -> list[npt.NDArray[np.int64]]:
    grids = []
    for axis in range(arity):
        shape = [1] * arity
        shape[axis] = size
        grids.append(np.arange(size).reshape(shape))
    return grids


def parse_region(text: str, arity: int) -> Region:
    """Parse ``full | diagonal | order:<chain> | arcs:k0,k1,…[/count]``."""
    text = text.strip()
    if text == "full":
        return Region.full(arity)
    if text == "diagonal":
        return Region.diagonal(arity)
    if text == "offdiagonal":
        return Region.diagonal(arity).complement()
    kind, _, rest = text.partition(":")
    if kind == "order" and rest:
        return Region.order(rest, arity)
    if kind == "arcs" and rest:
        ks_text, _, count_text = rest.partition("/")
        try:
            ks = [int(k) for k in ks_text.split(",")]
            count = int(count_text) if count_text else None
        except ValueError as e:
            raise ValueError(f"malformed arc list {rest!r}") from e
        if len(ks) != arity:
            raise ValueError(f"arc list {rest!r} has {len(ks)} entries, expected {arity}")
        return Region.arcs(ks, count)
    raise ValueError(f"unknown region {text!r}")


def parse_symbol(text: str, arity: int, h: Polynomial) -> MoiSymbol:
    """Parse ``divdiff | phi:n,m,k | psi:m | gamma:s | const:c``.

    ``h`` is the polynomial used by ``divdiff`` (as ``f``) and ``phi``.
    """
    kind, _, rest = text.strip().partition(":")
    try:
        if kind == "divdiff":
            sym = MoiSymbol.divdiff(h, arity - 1)
        elif kind == "phi":
            n, m, k = (int(v) for v in rest.split(","))
            sym = MoiSymbol.phi(SymbolPhi(n, h, m, k))
        elif kind == "psi":
            sym = MoiSymbol.psi(int(rest))
        elif kind == "gamma":
            sym = MoiSymbol.gamma(float(rest))
        elif kind == "const":
            sym = MoiSymbol.constant(arity, complex(rest.replace(" ", "")) if rest else 1.0)
        else:
            raise ValueError(f"unknown symbol {text!r}")
    except (TypeError, ValueError) as e:
        raise ValueError(f"malformed symbol {text!r}: {e}") from e
    if sym.arity != arity:
        raise ValueError(f"symbol {text!r} has arity {sym.arity}, expected {arity}")
    return sym


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


class MultipleOperatorIntegral:
    """``T_φ^B`` bound to spectral data, callable on ``n`` matrices."""

    def __init__(self, unitary: SpectralUnitary, symbol: MoiSymbol, region: Region | None = None):
        region = region if region is not None else Region.full(symbol.arity)
        if region.arity != symbol.arity:
            raise ValueError(f"region arity {region.arity} does not match symbol arity {symbol.arity}")
        if symbol.arity < 2:
            raise ValueError("an MOI needs at least one operator argument")
        cap = COLUMN_BUDGET.get(symbol.arity, 0)
        if unitary.dim > cap:
            raise BudgetExceededError(
                f"MOI of arity {symbol.arity} over {unitary.dim} columns exceeds the budget of {cap}"
            )
        self.unitary = unitary
        self.symbol = symbol
        self.region = region
        self.n = symbol.arity - 1
        self._tensor: npt.NDArray[np.complex128] | None = None

    def _slice(self, c0: int) -> npt.NDArray[np.complex128]:
        """Symbol times region mask for leading column ``c0``; axes ``c_1 … c_n``."""
        if self._tensor is not None:
            return self._tensor[c0]
        unitary = self.unitary
        dim = unitary.dim
        labels = unitary.labels
        idx: list[Any] = [np.asarray(labels[c0])]
        for axis in range(self.n):
            shape = [1] * self.n
            shape[axis] = dim
            idx.append(labels.reshape(shape))
        pts = [unitary.points[i] for i in idx]
        values = np.asarray(self.symbol(*pts), dtype=np.complex128)
        values = np.broadcast_to(values, (dim,) * self.n)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"symbol {self.symbol.label} returned non-finite values")
        if not self.region.is_full:
            values = np.where(self.region.mask(idx, unitary.points), values, 0)
        return values

    def tensor(self) -> npt.NDArray[np.complex128]:
        """Full symbol tensor over basis columns (cached when small)."""
        if self._tensor is None:
            self._tensor = np.stack([self._slice(c0) for c0 in range(self.unitary.dim)])
        return self._tensor

    def __call__(self, *xs: Matrix) -> Matrix:
        if len(xs) != self.n:
            raise ValueError(f"MOI of order {self.n} takes {self.n} matrices, got {len(xs)}")
        dim = self.unitary.dim
        ys = []
        for i, x in enumerate(xs, start=1):
            x = as_matrix(x, name=f"x_{i}")
            if x.shape != (dim, dim):
                raise ValueError(f"x_{i} has shape {x.shape}, expected {(dim, dim)}")
            ys.append(self.unitary.to_eigenbasis(x))
        if self._tensor is None and dim ** (self.n + 1) <= TENSOR_CACHE_LIMIT:
            self.tensor()

        out = np.empty((dim, dim), dtype=np.complex128)
        for c0 in range(dim):
            acc = self._slice(c0) * ys[0][c0].reshape((dim,) + (1,) * (self.n - 1))
            for y in ys[1:]:
                # contract the leading axis c_{i-1} against y[c_{i-1}, c_i]
                acc = np.einsum("ab...,ab->b...", acc, y)
            out[c0] = acc
        return self.unitary.from_eigenbasis(out)


def moi_apply(unitary: SpectralUnitary, sym: MoiSymbol, region: Region | None, xs: Sequence[Matrix]) -> Matrix:
    """``T_φ^B(x_1, …, x_n)`` by the eigenbasis fast path."""
    return MultipleOperatorIntegral(unitary, sym, region)(*xs)


def moi_apply_naive(unitary: SpectralUnitary, sym: MoiSymbol, region: Region | None, xs: Sequence[Matrix]) -> Matrix:
    """Direct summation of projection products over group tuples."""
    region = region if region is not None else Region.full(sym.arity)
    projections = unitary.projections()
    active = [j for j in range(unitary.size) if unitary.ranks[j] > 0]
    dim = unitary.dim
    out = np.zeros((dim, dim), dtype=np.complex128)
    for tup in itertools.product(active, repeat=sym.arity):
        if not bool(region.mask([np.asarray(j) for j in tup], unitary.points)):
            continue
        coeff = complex(np.asarray(sym(*[unitary.points[j] for j in tup])))
        if coeff == 0:
            continue
        term = projections[tup[0]]
        for x, j in zip(xs, tup[1:]):
            term = term @ x @ projections[j]
        out += coeff * term
    return out


# ---------------------------------------------------------------------------
# Identity checks
# ---------------------------------------------------------------------------


def region_additivity_check(
    unitary: SpectralUnitary,
    sym: MoiSymbol,
    b: Region,
    c: Region,
    xs: Sequence[Matrix],
) -> float:
    """``‖T^{B∪C} − T^B − T^C‖_∞`` for disjoint ``B`` and ``C``.

    Raises:
        ValueError: If the regions overlap.
    """
    if np.any(b.full_mask(unitary) & c.full_mask(unitary)):
        raise ValueError(f"regions {b.label} and {c.label} overlap")
    whole = moi_apply(unitary, sym, b.union(c), xs)
    parts = moi_apply(unitary, sym, b, xs) + moi_apply(unitary, sym, c, xs)
    return operator_norm(whole - parts)


def adjoint_identity_check(unitary: SpectralUnitary, sym: MoiSymbol, region: Region, xs: Sequence[Matrix]) -> float:
    """``‖T_φ^B(x_1..x_n)* − T_{φ̄}^{B̄}(x_n*..x_1*)‖_∞``."""
    lhs = adjoint(moi_apply(unitary, sym, region, xs))
    rhs = moi_apply(unitary, sym.conjugate_reversed(), region.reversed(), [adjoint(x) for x in reversed(xs)])
    return operator_norm(lhs - rhs)


def duality_identity_check(
    unitary: SpectralUnitary,
    sym: MoiSymbol,
    region: Region,
    x0: Matrix,
    xs: Sequence[Matrix],
) -> float:
    """``|tr(x_0 T_φ^B(x_1..x_n)) − tr(T_{φ*}^{B*}(x_0..x_{n−1}) x_n)|``."""
    lhs = np.trace(x0 @ moi_apply(unitary, sym, region, xs))
    rhs = np.trace(moi_apply(unitary, sym.cyclic(), region.cyclic(), [x0, *xs[:-1]]) @ xs[-1])
    return float(abs(lhs - rhs))


def product_identity_check(
    unitary: SpectralUnitary,
    first: tuple[MoiSymbol, Region],
    second: tuple[MoiSymbol, Region],
    xs: Sequence[Matrix],
) -> float:
    """``‖T_ψ^{B̃}(x_1..x_n) − T_{φ1}^{B1}(x_1..x_k) T_{φ2}^{B2}(x_{k+1}..x_n)‖_∞``."""
    (s1, b1), (s2, b2) = first, second
    k = s1.arity - 1
    lhs = moi_apply(unitary, s1.tensor(s2), b1.tensor(b2), xs)
    rhs = moi_apply(unitary, s1, b1, xs[:k]) @ moi_apply(unitary, s2, b2, xs[k:])
    return operator_norm(lhs - rhs)


def composition_identity_check(
    unitary: SpectralUnitary,
    inner: tuple[MoiSymbol, Region],
    outer: tuple[MoiSymbol, Region],
    xs: Sequence[Matrix],
) -> float:
    """``‖T_ψ^{B̃}(x_1..x_n) − T_{φ2}^{B2}(T_{φ1}^{B1}(x_1..x_k), x_{k+1}..x_n)‖_∞``."""
    (s1, b1), (s2, b2) = inner, outer
    k = s1.arity - 1
    lhs = moi_apply(unitary, s1.compose(s2), b1.compose(b2), xs)
    rhs = moi_apply(unitary, s2, b2, [moi_apply(unitary, s1, b1, xs[:k]), *xs[k:]])
    return operator_norm(lhs - rhs)


# ---------------------------------------------------------------------------
# Structured transforms
# ---------------------------------------------------------------------------


def triangular_truncation(
    unitary: SpectralUnitary,
    x: Matrix,
    mode: Literal["strict_upper", "strict_lower", "diagonal"],
) -> Matrix:
    """``Σ_{i<j} E_i x E_j``, ``Σ_{i>j} E_i x E_j`` or ``Σ_j E_j x E_j``.

    Raises:
        ValueError: If the spectral groups are not in ascending argument order.
    """
    if not unitary.is_ordered():
        raise ValueError("triangular truncation needs spectral groups in ascending order")
    rows = unitary.labels[:, None]
    cols = unitary.labels[None, :]
    keep = {"strict_upper": rows < cols, "strict_lower": rows > cols, "diagonal": rows == cols}
    if mode not in keep:
        raise ValueError(f"unknown truncation mode {mode!r}")
    y = unitary.to_eigenbasis(as_matrix(x))
    return unitary.from_eigenbasis(np.where(keep[mode], y, 0))


def upsilon_gamma_transform(
    unitary: SpectralUnitary,
    x: Matrix,
    kind: Literal["upsilon", "upsilon_neg", "gamma"],
    param: float,
    rows: Iterable[int] | None = None,
    cols: Iterable[int] | None = None,
) -> Matrix:
    """``Υ_m``, ``Υ_{−m}`` or ``Γ_s`` restricted to the block ``rows × cols``."""
    if kind == "upsilon":
        sym = MoiSymbol.psi(int(param))
    elif kind == "upsilon_neg":
        sym = MoiSymbol.psi(-int(param))
    elif kind == "gamma":
        sym = MoiSymbol.gamma(float(param))
    else:
        raise ValueError(f"unknown transform {kind!r}")
    return moi_apply(unitary, sym, Region.block(rows, cols), [x])


def diagonal_moi(unitary: SpectralUnitary, phi: MoiSymbol, xs: Sequence[Matrix]) -> Matrix:
    """``Δ_φ(x_1..x_n) = Σ_j φ(z_j, …, z_j) E_j x_1 E_j ⋯ x_n E_j``."""
    if len(xs) != phi.arity - 1:
        raise ValueError(f"Δ_φ of arity {phi.arity} takes {phi.arity - 1} matrices, got {len(xs)}")
    ys = [unitary.to_eigenbasis(as_matrix(x)) for x in xs]
    out = np.zeros((unitary.dim, unitary.dim), dtype=np.complex128)
    for j, z in enumerate(unitary.points):
        cols = unitary.columns(j)
        if cols.size == 0:
            continue
        block = np.eye(cols.size, dtype=np.complex128)
        for y in ys:
            block = block @ y[np.ix_(cols, cols)]
        out[np.ix_(cols, cols)] = complex(np.asarray(phi(*([z] * phi.arity)))) * block
    return unitary.from_eigenbasis(out)


def diagonal_compression_product(unitary: SpectralUnitary, xs: Sequence[Matrix]) -> Matrix:
    """``Π_i (Σ_j E_j x_i E_j)``."""
    same = unitary.labels[:, None] == unitary.labels[None, :]
    out = np.eye(unitary.dim, dtype=np.complex128)
    for x in xs:
        out = out @ np.where(same, unitary.to_eigenbasis(as_matrix(x)), 0)
    return unitary.from_eigenbasis(out)


def diagonal_average(unitary: SpectralUnitary, xs: Sequence[Matrix], grid_size: int) -> Matrix:
    """``(1/N^n) Σ_{k_1..k_n} Π_i U*_{k_i/N} x_i U_{k_i/N}`` with ``U_{k/N} = U^k``.

    Raises:
        ValueError: If some spectral point is not an N-th root of unity.
    """
    if np.max(np.abs(unitary.points**grid_size - 1)) > 1e-9:
        raise ValueError(f"spectral points do not lie on the {grid_size}-grid")
    if grid_size ** len(xs) > 100_000:
        raise BudgetExceededError("discrete average exceeds 1e5 terms")
    powers = [unitary.power(k) for k in range(grid_size)]
    conj_powers = [adjoint(p) for p in powers]
    out = np.zeros((unitary.dim, unitary.dim), dtype=np.complex128)
    for ks in itertools.product(range(grid_size), repeat=len(xs)):
        term = np.eye(unitary.dim, dtype=np.complex128)
        for k, x in zip(ks, xs):
            term = term @ conj_powers[k] @ x @ powers[k]
        out += term
    return out / grid_size ** len(xs)


# ---------------------------------------------------------------------------
# Norm estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormEstimate:
    """Lower bound on a multilinear norm with the inputs that achieve it."""

    value: float
    inputs: tuple[Matrix, ...] = field(repr=False)
    trial: int


def target_exponent(alphas: Sequence[float]) -> float:
    """``α`` with ``1/α = Σ 1/α_i``.

    Raises:
        ValueError: If some ``α_i < 1`` or ``Σ 1/α_i > 1``.
    """
    if not alphas:
        raise ValueError("at least one exponent is required")
    if any(not a >= 1 for a in alphas):
        raise ValueError(f"exponents must be >= 1, got {list(alphas)}")
    inv = sum(0.0 if math.isinf(a) else 1.0 / a for a in alphas)
    if inv > 1 + 1e-12:
        raise ValueError(f"exponents {list(alphas)} give 1/α = {inv:.6g} > 1")
    return math.inf if inv == 0 else 1.0 / inv


def _normalize(x: Matrix, p: float) -> Matrix:
    norm = schatten_norm(x, p)
    return x / norm if norm > 0 else x


def spectral_probes(unitary: SpectralUnitary, n: int, count: int = 256, seed: int = 0) -> list[tuple[Matrix, ...]]:
    """Eigenbasis matrix-unit chains ``(|q_a⟩⟨q_b|, |q_b⟩⟨q_c|, …)``.

    For ``n = 1`` every unit is returned; otherwise a seeded sample of
    ``count`` chains.
    """
    q = unitary.basis
    dim = unitary.dim

    def unit(a: int, b: int) -> Matrix:
        return np.outer(q[:, a], q[:, b].conj())

    if n == 1:
        return [(unit(a, b),) for a in range(dim) for b in range(dim)]
    rng = make_rng(seed, "spectral_probes", dim, n)
    chains = rng.integers(0, dim, size=(count, n + 1))
    return [tuple(unit(int(c[i]), int(c[i + 1])) for i in range(n)) for c in chains]


def estimate_multilinear_norm(
    transform: Callable[..., Matrix],
    alphas: Sequence[float],
    dim: int,
    trials: int,
    seed: int,
    *,
    probes: Sequence[Sequence[Matrix]] | None = None,
    polish_rounds: int = 3,
    proposals: int = 2,
) -> NormEstimate:
    """Empirical lower bound of ``sup ‖T(x_1..x_n)‖_α`` over ``‖x_i‖_{α_i} = 1``.

    Probe tuples are evaluated first. Then every seeded random trial is
    polished by coordinate ascent: each slot in turn takes a random step and
    keeps it if the ratio grows, with the step halving each round. Trial
    ``t`` draws from its own stream, so extra trials never lower the result.
    """
    alpha = target_exponent(alphas)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")

    def score(xs: Sequence[Matrix]) -> float:
        return schatten_norm(transform(*xs), alpha)

    best = NormEstimate(0.0, (), -1)
    for probe in probes or ():
        xs = tuple(_normalize(as_matrix(x), a) for x, a in zip(probe, alphas))
        value = score(xs)
        if value > best.value:
            best = NormEstimate(value, xs, -1)

    for t in range(trials):
        rng = make_rng(seed, "norm_trial", t)
        xs = [_normalize(random_complex(rng, (dim, dim)), a) for a in alphas]
        value = score(xs)
        step = 0.5
        for _ in range(polish_rounds):
            for i, a in enumerate(alphas):
                for _ in range(proposals):
                    candidate = list(xs)
                    candidate[i] = _normalize(xs[i] + step * _normalize(random_complex(rng, (dim, dim)), a), a)
                    cand_value = score(candidate)
                    if cand_value > value:
                        xs, value = candidate, cand_value
            step *= 0.5
        if value > best.value:
            best = NormEstimate(value, tuple(xs), t)
    logger.debug("norm estimate %.6g from trial %d", best.value, best.trial)
    return best


# ---------------------------------------------------------------------------
# Boundedness probes for the symbol families
# ---------------------------------------------------------------------------

ProbeKind = Literal["indbase", "indstep", "kpss"]


@dataclass(frozen=True)
class NormProbeCell:
    probe: str
    variant: str
    dim: int
    alpha: float
    estimate: float
    scale: float

    @property
    def ratio(self) -> float:
        return self.estimate / self.scale if self.scale > 0 else 0.0

    def as_row(self) -> dict[str, Any]:
        return {
            "probe": self.probe,
            "variant": self.variant,
            "dim": self.dim,
            "alpha": self.alpha,
            "estimate": self.estimate,
            "scale": self.scale,
            "ratio": self.ratio,
        }


def _probe_cells(
    probe: ProbeKind,
    dim: int,
    alpha: float,
    trials: int,
    seed: int,
    n: int,
    m: int,
    s: float,
    degree: int,
) -> list[NormProbeCell]:
    unitary = random_unitary(dim, seed + dim)
    rng = make_rng(seed, "norm_probe", probe, dim)
    h = Polynomial.random(rng, degree)
    h_sup = sup_norm_circle(h)
    cells = []

    def run(variant: str, sym: MoiSymbol, alphas: list[float], scale: float) -> None:
        op = MultipleOperatorIntegral(unitary, sym)
        est = estimate_multilinear_norm(
            op, alphas, dim, trials, seed, probes=spectral_probes(unitary, len(alphas), seed=seed)
        )
        cells.append(NormProbeCell(probe, variant, dim, alpha, est.value, scale))

    if probe == "indbase":
        run(f"phi_hm:m={m}", MoiSymbol.phi_hm(h, m), [alpha], h_sup)
    elif probe == "indstep":
        alphas = [n * alpha] * n
        run(f"phi:{n},{m - 1},0", MoiSymbol.phi(SymbolPhi(n, h, m - 1, 0)), alphas, h_sup)
        run(f"phi:{n},0,{m - 1}", MoiSymbol.phi(SymbolPhi(n, h, 0, m - 1)), alphas, h_sup)
    elif probe == "kpss":
        run(f"upsilon:{m}", MoiSymbol.psi(m), [alpha], 1.0)
        run(f"upsilon:{-m}", MoiSymbol.psi(-m), [alpha], 1.0)
        run(f"gamma:{s}", MoiSymbol.gamma(s), [alpha], 1.0 + abs(s) + s * s)
    else:
        raise ValueError(f"unknown probe {probe!r}")
    return cells


def symbol_norm_experiment(
    probe: ProbeKind,
    dims: Sequence[int],
    alpha: float,
    trials: int,
    seed: int,
    *,
    n: int = 2,
    m: int = 1,
    s: float = 1.0,
    degree: int = 6,
    executor: Executor | None = None,
) -> list[NormProbeCell]:
    """Observed norm ratios of the symbol families across dimensions.

    ``indbase`` probes ``T_{φ_{h,m}}`` on ``S^α``; ``indstep`` probes
    ``T_{φ_{n,h,m−1,0}}`` and ``T_{φ_{n,h,0,m−1}}`` on ``(S^{nα})^n``;
    ``kpss`` probes ``Υ_{±m}`` and ``Γ_s``. Ratios are normalised by
    ``‖h‖_∞`` or ``1 + |s| + s²``. Nothing is asserted about them.

    Raises:
        ValueError: If ``α ≤ 1`` or ``m < 1``.
    """
    if not alpha > 1:
        raise ValueError(f"α must exceed 1, got {alpha}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    args = [(probe, d, alpha, trials, seed, n, m, s, degree) for d in dims]
    if executor is None:
        results = [_probe_cells(*a) for a in args]
    else:
        results = list(executor.map(lambda a: _probe_cells(*a), args))
    cells = [c for chunk in results for c in chunk]
    return sorted(cells, key=lambda c: (c.dim, c.variant))
