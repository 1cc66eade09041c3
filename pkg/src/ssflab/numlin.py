"""Dense complex linear algebra for contraction pairs.

Everything here works on plain ``numpy`` complex arrays. Spectral data of a
unitary is never recovered from the matrix itself: unitaries are built from a
known orthonormal basis and known eigenvalues, and :class:`SpectralUnitary`
carries both.
"""

from __future__ import annotations

import hashlib
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy.linalg import qr

logger = logging.getLogger(__name__)

Matrix = npt.NDArray[np.complex128]

CONTRACTION_TOL = 1e-10
UNIMODULAR_TOL = 1e-12
PROJECTION_TOL = 1e-10
# distance in grid units below which a point counts as on the grid
GRID_SNAP = 1e-9


class NotHermitianError(ValueError):
    """Raised when a matrix handed to the Hermitian eigensolver is not Hermitian."""


class ConvergenceError(RuntimeError):
    """Raised when Jacobi sweeps do not reach the off-diagonal threshold."""


class InfeasibleTargetError(ValueError):
    """Raised when a perturbation cannot reach the requested Schatten norm.

    Attributes:
        max_norm: Largest feasible Schatten norm along the rescaling ray.
    """

    def __init__(self, message: str, max_norm: float):
        super().__init__(message)
        self.max_norm = max_norm


def as_matrix(x: Any, *, name: str = "matrix") -> Matrix:
    """Coerce ``x`` to a finite square complex matrix."""
    arr = np.array(x, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return arr


def adjoint(x: Matrix) -> Matrix:
    return x.conj().T


# ---------------------------------------------------------------------------
# Hermitian eigensolver
# ---------------------------------------------------------------------------


def _round_robin(size: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint pivot pairs for one cyclic sweep, grouped into parallel rounds."""
    players = list(range(size + (size % 2)))
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(p, q) for p, q in pairs if p < size and q < size]
        if pairs:
            ps, qs = zip(*pairs)
            rounds.append((np.array(ps), np.array(qs)))
        players = [players[0], players[-1], *players[1:-1]]
    return rounds


def hermitian_eigh(
    h: Matrix,
    *,
    tol: float = 1e-13,
    max_sweeps: int = 64,
) -> tuple[npt.NDArray[np.float64], Matrix]:
    """Eigen-decompose a Hermitian matrix by cyclic complex Jacobi rotations.

    Each sweep visits every pivot pair once, in round-robin order so that
    the pairs of one round are disjoint and can be rotated together.
    Each 2x2 block ``[[a, b], [conj(b), d]]`` is first made real by a
    phase ``e^{-i arg b}`` on column ``q``. A real Givens rotation with
    ``tan 2θ = 2|b| / (a - d)`` then annihilates it, taking the root with
    ``|θ| ≤ π/4`` so that the pair is never swapped.

    Args:
        h: Hermitian matrix (within 1e-10, relative to its largest entry).
        tol: Stop once the off-diagonal Frobenius mass drops below
            ``tol`` times the Frobenius norm of ``h``.
        max_sweeps: Sweep cap.

    Returns:
        ``(eigenvalues, vectors)`` with eigenvalues descending and the
        eigenvectors as the matching columns of a unitary matrix.

    Raises:
        NotHermitianError: If ``h`` is not Hermitian.
        ConvergenceError: If the sweep cap is reached.
    """
    a = as_matrix(h, name="h")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - adjoint(a))) > 1e-10 * scale:
        raise NotHermitianError("matrix is not Hermitian within 1e-10")
    a = 0.5 * (a + adjoint(a))
    size = a.shape[0]
    vectors = np.eye(size, dtype=np.complex128)

    total = float(np.linalg.norm(a))
    # round-off floor of the dense rotation updates for large dims
    threshold = max(tol, 32.0 * size * np.finfo(float).eps) * total
    rounds = _round_robin(size)
    off_diagonal = ~np.eye(size, dtype=bool)

    def off_mass(m: Matrix) -> float:
        return float(np.linalg.norm(m[off_diagonal]))

    sweeps = 0
    while off_mass(a) > threshold:
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"Jacobi did not converge within {max_sweeps} sweeps (off-diagonal mass {off_mass(a):.3e})"
            )
        for ps, qs in rounds:
            b = a[ps, qs]
            gap = a[ps, ps].real - a[qs, qs].real
            sign = np.where(gap >= 0.0, 1.0, -1.0)
            theta = 0.5 * np.arctan2(2.0 * np.abs(b) * sign, np.abs(gap))
            c = np.cos(theta)
            s = np.sin(theta)
            phase = np.exp(-1j * np.angle(b))
            rot = np.eye(size, dtype=np.complex128)
            rot[ps, ps] = c
            rot[ps, qs] = -s
            rot[qs, ps] = s * phase
            rot[qs, qs] = c * phase
            a = adjoint(rot) @ a @ rot
            vectors = vectors @ rot
        a = 0.5 * (a + adjoint(a))
        sweeps += 1

    logger.debug("Jacobi converged after %d sweeps (dim=%d)", sweeps, size)
    values = np.diag(a).real.copy()
    order = np.argsort(-values, kind="stable")
    return values[order], vectors[:, order]


def hermitian_eigenvalues(h: Matrix) -> list[float]:
    """Real eigenvalues of a Hermitian matrix, descending."""
    values, _ = hermitian_eigh(h)
    return [float(v) for v in values]


def singular_values(x: Matrix) -> npt.NDArray[np.float64]:
    """Singular values, descending, as square roots of the eigenvalues of ``x* x``."""
    x = as_matrix(x, name="x")
    gram = adjoint(x) @ x
    values, _ = hermitian_eigh(gram)
    return np.sqrt(np.clip(values, 0.0, None))


def schatten_norm(x: Matrix, p: float) -> float:
    """Schatten p-norm ``(Σ σ_i^p)^(1/p)``; ``p = inf`` gives the operator norm.

    Raises:
        ValueError: If ``p < 1``.
    """
    if not p >= 1:
        raise ValueError(f"invalid Schatten exponent {p!r}: must be >= 1")
    sigma = singular_values(x)
    top = float(sigma[0])
    if math.isinf(p) or top == 0.0:
        return top
    return top * float(np.sum((sigma / top) ** p)) ** (1.0 / p)


def operator_norm(x: Matrix) -> float:
    return schatten_norm(x, math.inf)


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------


def make_rng(seed: int, *tag: object) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, tag)``.

    Distinct tags give independent streams for the same seed, so experiment
    cells can be run in any order.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    digest = hashlib.sha256("/".join(str(t) for t in tag).encode()).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *words])))


def random_complex(rng: np.random.Generator, shape: tuple[int, ...]) -> npt.NDArray[np.complex128]:
    """Standard complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def haar_unitary(rng: np.random.Generator, dim: int) -> Matrix:
    """Haar-distributed unitary from a phase-corrected QR of a Ginibre matrix."""
    q, r = qr(random_complex(rng, (dim, dim)))
    d = np.diag(r)
    return q * (d / np.abs(d))


# ---------------------------------------------------------------------------
# Spectral data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralUnitary:
    """Unitary ``Σ_j z_j E_j`` given by unit-circle points and spectral projections.

    ``basis`` is a unitary whose columns diagonalise every ``E_j``. Column
    ``c`` belongs to group ``labels[c]``. A group may be empty (rank zero).
    """

    points: npt.NDArray[np.complex128]
    basis: Matrix
    labels: npt.NDArray[np.int64]

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.complex128).reshape(-1)
        basis = as_matrix(self.basis, name="basis")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "labels", labels)

        if points.size == 0:
            raise ValueError("spectral data needs at least one point")
        if np.max(np.abs(np.abs(points) - 1.0)) > UNIMODULAR_TOL:
            raise ValueError("every eigenvalue must have modulus 1 within 1e-12")
        if labels.shape != (basis.shape[0],):
            raise ValueError("labels must assign every basis column to a group")
        if labels.min() < 0 or labels.max() >= points.size:
            raise ValueError("labels out of range")
        gram = adjoint(basis) @ basis
        if np.max(np.abs(gram - np.eye(basis.shape[0]))) > PROJECTION_TOL:
            raise ValueError("basis is not unitary within 1e-10")

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def size(self) -> int:
        """Number of spectral groups G."""
        return self.points.size

    @property
    def ranks(self) -> npt.NDArray[np.int64]:
        return np.bincount(self.labels, minlength=self.size)

    @property
    def is_simple(self) -> bool:
        """True when every group is a rank-one projection."""
        return bool(np.all(self.ranks == 1))

    def columns(self, j: int) -> npt.NDArray[np.int64]:
        return np.flatnonzero(self.labels == j)

    def projection(self, j: int) -> Matrix:
        q = self.basis[:, self.columns(j)]
        return q @ adjoint(q)

    def projections(self) -> list[Matrix]:
        return [self.projection(j) for j in range(self.size)]

    def groups(self) -> list[tuple[complex, Matrix]]:
        return [(complex(z), self.projection(j)) for j, z in enumerate(self.points)]

    def projection_sum(self, indices: Sequence[int]) -> Matrix:
        """``Σ_{j ∈ indices} E_j``."""
        mask = np.isin(self.labels, np.asarray(list(indices), dtype=np.int64))
        q = self.basis[:, mask]
        return q @ adjoint(q)

    def matrix(self) -> Matrix:
        return self.power(1)

    def power(self, k: int) -> Matrix:
        """``U^k`` for any integer ``k`` (negative powers are adjoints)."""
        diag = self.points[self.labels] ** k
        return (self.basis * diag) @ adjoint(self.basis)

    def to_eigenbasis(self, x: Matrix) -> Matrix:
        return adjoint(self.basis) @ x @ self.basis

    def from_eigenbasis(self, y: Matrix) -> Matrix:
        return self.basis @ y @ adjoint(self.basis)

    def is_ordered(self) -> bool:
        """True when the points are in strictly ascending argument order on [0, 2π)."""
        angles = np.mod(np.angle(self.points), 2 * np.pi)
        return bool(np.all(np.diff(angles) > 0))

    @classmethod
    def from_groups(cls, groups: Sequence[tuple[complex, Matrix]]) -> SpectralUnitary:
        """Assemble spectral data from ``(eigenvalue, projection)`` pairs.

        Raises:
            ValueError: If a projection is not a Hermitian idempotent, the
                projections overlap, or they do not resolve the identity.
        """
        if not groups:
            raise ValueError("at least one group is required")
        dim = as_matrix(groups[0][1], name="projection").shape[0]
        columns: list[Matrix] = []
        labels: list[int] = []
        total = np.zeros((dim, dim), dtype=np.complex128)
        for j, (_, proj) in enumerate(groups):
            e = as_matrix(proj, name=f"projection {j}")
            if e.shape != (dim, dim):
                raise ValueError(f"projection {j} has shape {e.shape}, expected {(dim, dim)}")
            if np.max(np.abs(e @ e - e)) > PROJECTION_TOL:
                raise ValueError(f"projection {j} is not idempotent within 1e-10")
            values, vectors = hermitian_eigh(e)
            keep = values > 0.5
            columns.append(vectors[:, keep])
            labels.extend([j] * int(keep.sum()))
            total += e
        if np.max(np.abs(total - np.eye(dim))) > PROJECTION_TOL:
            raise ValueError("projections do not sum to the identity within 1e-10")
        basis = np.concatenate(columns, axis=1)
        if basis.shape[1] != dim:
            raise ValueError("projections are not mutually orthogonal")
        points = np.array([complex(z) for z, _ in groups])
        return cls(points=points, basis=basis, labels=np.array(labels))


def random_unitary(dim: int, seed: int) -> SpectralUnitary:
    """Seeded random unitary with simple spectrum and Haar eigenbasis."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    rng = make_rng(seed, "random_unitary", dim)
    basis = haar_unitary(rng, dim)
    theta = rng.uniform(0.0, 2 * np.pi, size=dim)
    return SpectralUnitary(points=np.exp(1j * theta), basis=basis, labels=np.arange(dim))


def discretize_unitary(u: SpectralUnitary, grid_size: int) -> SpectralUnitary:
    """Round every eigenvalue down onto the grid ``e^{2πij/N}``.

    A point ``e^{2πiφ}`` with ``φ ∈ [0, 1)`` moves to ``j = floor(Nφ)``.
    When ``Nφ`` is within ``GRID_SNAP`` of an integer the point is taken to
    be on the grid already and keeps that integer; ``np.angle`` cannot place
    a grid point exactly, and plain ``floor`` would drop it one cell. Groups
    that land on the same grid point merge. The result is ordered by
    ascending ``j``.
    """
    if grid_size < 1:
        raise ValueError(f"grid size must be >= 1, got {grid_size}")
    phi = np.mod(np.angle(u.points) / (2 * np.pi), 1.0)
    scaled = grid_size * phi
    nearest = np.rint(scaled)
    cell = np.where(np.abs(scaled - nearest) <= GRID_SNAP, nearest, np.floor(scaled))
    index = np.mod(cell.astype(np.int64), grid_size)
    occupied = np.unique(index)
    remap = {int(j): g for g, j in enumerate(occupied)}
    labels = np.array([remap[int(index[old])] for old in u.labels], dtype=np.int64)
    points = np.exp(2j * np.pi * occupied / grid_size)
    return SpectralUnitary(points=points, basis=u.basis, labels=labels)


# ---------------------------------------------------------------------------
# Contraction pairs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ContractionPair:
    """A contraction ``u0`` and a perturbation ``v`` with ``u0 + v`` a contraction.

    ``spectral`` is set when ``u0`` is a unitary with known spectral data.
    """

    u0: Matrix
    v: Matrix
    spectral: SpectralUnitary | None = None

    def __post_init__(self) -> None:
        u0 = as_matrix(self.u0, name="u0")
        v = as_matrix(self.v, name="v")
        if u0.shape != v.shape:
            raise ValueError(f"u0 and v differ in shape: {u0.shape} vs {v.shape}")
        object.__setattr__(self, "u0", u0)
        object.__setattr__(self, "v", v)
        if operator_norm(u0) > 1 + CONTRACTION_TOL:
            raise ValueError("u0 is not a contraction")
        if operator_norm(u0 + v) > 1 + CONTRACTION_TOL:
            raise ValueError("u0 + v is not a contraction")
        if self.spectral is not None and np.max(np.abs(self.spectral.matrix() - u0)) > PROJECTION_TOL:
            raise ValueError("spectral data does not reproduce u0")

    @property
    def dim(self) -> int:
        return self.u0.shape[0]

    @property
    def u1(self) -> Matrix:
        return self.u0 + self.v

    def at(self, t: float) -> Matrix:
        """``U_t = U_0 + tV``."""
        return self.u0 + t * self.v

    def with_perturbation(self, v: Matrix) -> ContractionPair:
        return ContractionPair(self.u0, v, self.spectral)


def _max_feasible_scale(u0: Matrix, direction: Matrix, start: float) -> float:
    """Largest τ ≥ start with ``‖u0 + τ·direction‖ ≤ 1``, by bisection.

    ``τ ↦ ‖u0 + τ·direction‖`` is convex and ``τ = start`` is feasible, so the
    feasible set above ``start`` is an interval.
    """
    lo, hi = start, 2.0 * max(start, 1.0)
    while operator_norm(u0 + hi * direction) <= 1 + CONTRACTION_TOL:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            return math.inf
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if operator_norm(u0 + mid * direction) <= 1 + CONTRACTION_TOL:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return lo


def random_contraction_pair(
    dim: int,
    seed: int,
    schatten_p: float = 2.0,
    target_norm: float | None = None,
    *,
    unitary_u0: bool = False,
    margin: float = 0.05,
) -> ContractionPair:
    """Seeded pair ``(U_0, V)`` with ``U_0`` and ``U_0 + V`` contractions.

    ``U_0`` is a Ginibre matrix rescaled to operator norm ``1 - margin``, or a
    random unitary when ``unitary_u0`` is set. ``V = U_1 - U_0`` for an
    independent contraction ``U_1``. When ``target_norm`` is given, ``V`` is
    rescaled along the ray towards ``U_0`` so that ``‖V‖_p = target_norm``.

    Raises:
        InfeasibleTargetError: If ``U_0 + V`` would leave the unit ball.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if target_norm is not None and not target_norm > 0:
        raise ValueError(f"target_norm must be positive, got {target_norm}")
    rng = make_rng(seed, "contraction_pair", dim, unitary_u0)

    spectral = None
    if unitary_u0:
        spectral = random_unitary(dim, seed)
        u0 = spectral.matrix()
    else:
        g = random_complex(rng, (dim, dim))
        u0 = g * ((1.0 - margin) / operator_norm(g))
    g1 = random_complex(rng, (dim, dim))
    u1 = g1 * ((1.0 - margin) / operator_norm(g1))
    v = u1 - u0

    if target_norm is not None:
        base = schatten_norm(v, schatten_p)
        if base == 0.0:
            raise InfeasibleTargetError("perturbation direction vanishes", max_norm=0.0)
        tau = target_norm / base
        if tau > 1.0 and operator_norm(u0 + tau * v) > 1 + CONTRACTION_TOL:
            tau_max = _max_feasible_scale(u0, v, 1.0)
            raise InfeasibleTargetError(
                f"target norm {target_norm:g} leaves the contraction ball; "
                f"largest feasible is {tau_max * base:.6g}",
                max_norm=tau_max * base,
            )
        v = tau * v
    return ContractionPair(u0, v, spectral)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def matrix_to_json(x: Matrix) -> dict[str, Any]:
    x = as_matrix(x)
    return {
        "dim": x.shape[0],
        "entries": [[float(z.real), float(z.imag)] for z in x.reshape(-1)],
    }


def matrix_from_json(obj: dict[str, Any]) -> Matrix:
    """Inverse of :func:`matrix_to_json`.

    Raises:
        ValueError: If the object is malformed.
    """
    try:
        dim = int(obj["dim"])
        entries = obj["entries"]
    except (KeyError, TypeError) as e:
        raise ValueError(f"matrix JSON needs 'dim' and 'entries': {e}") from e
    if dim < 1 or len(entries) != dim * dim:
        raise ValueError(f"matrix JSON has {len(entries)} entries for dim {dim}")
    try:
        values = np.array([complex(float(re), float(im)) for re, im in entries], dtype=np.complex128)
    except (TypeError, ValueError) as e:
        raise ValueError(f"matrix entries must be [re, im] pairs: {e}") from e
    return as_matrix(values.reshape(dim, dim))


def pair_from_json(obj: dict[str, Any]) -> ContractionPair:
    """Read ``{"u0": matrix, "v": matrix}``."""
    try:
        return ContractionPair(matrix_from_json(obj["u0"]), matrix_from_json(obj["v"]))
    except KeyError as e:
        raise ValueError(f"pair JSON is missing {e}") from e
