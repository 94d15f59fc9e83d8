"""
One-dimensional spatial substrate: uniform grids, superpotential samples,
sparse finite-difference operators with Dirichlet walls and a banded
Hermitian eigensolver.

Dirichlet walls sit one spacing outside the end samples, so a grid of
n_points samples describes a box of length (n_points + 1) * dx.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.integrate import trapezoid

from lib.errors import ValidationError

logger = logging.getLogger(__name__)

MIN_POINTS = 3
MAX_POINTS = 20001

# centered first-difference coefficients by accuracy order, offsets 1..half
FIRST_DIFFERENCE_STENCILS = {
    2: (0.5,),
    4: (8.0 / 12.0, -1.0 / 12.0),
    6: (45.0 / 60.0, -9.0 / 60.0, 1.0 / 60.0),
}


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)) or self.x_max <= self.x_min:
            raise ValidationError(f"SpatialGrid needs x_max > x_min, got [{self.x_min}, {self.x_max}]")
        if not MIN_POINTS <= int(self.n_points) <= MAX_POINTS:
            raise ValidationError(
                f"SpatialGrid n_points must be in [{MIN_POINTS}, {MAX_POINTS}], got {self.n_points}"
            )

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def box_length(self) -> float:
        return (self.n_points + 1) * self.dx

    def refine(self) -> "SpatialGrid":
        """Same interval with dx halved"""
        return SpatialGrid(self.x_min, self.x_max, 2 * (self.n_points - 1) + 1)

    def box_modes(self, count: int) -> np.ndarray:
        """Lowest particle-in-a-box modes vanishing on both walls, shape (count, n_points)"""
        n = np.arange(1, count + 1)[:, None]
        return np.sin(n * np.pi * (self.x - self.x_min + self.dx)[None, :] / self.box_length)

    def interior(self, margin: int) -> slice:
        if 2 * margin >= self.n_points:
            raise ValidationError(f"Grid of {self.n_points} points has no interior at margin {margin}")
        return slice(margin, self.n_points - margin)


@dataclass
class SuperpotentialField:
    """W(x) and W'(x) sampled on a grid; W' falls back to centered differences"""
    grid: SpatialGrid
    w: np.ndarray
    w_prime: Optional[np.ndarray] = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.shape != (self.grid.n_points,):
            raise ValidationError(f"W needs {self.grid.n_points} samples, got {self.w.shape}")
        if self.w_prime is None:
            self.w_prime = np.gradient(self.w, self.grid.dx, edge_order=2)
        self.w_prime = np.asarray(self.w_prime, dtype=float)
        if self.w_prime.shape != self.w.shape:
            raise ValidationError("W and W' sample counts differ")
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.w_prime))):
            raise ValidationError("Superpotential samples contain non-finite entries")

    def prime_consistency(self) -> float:
        """Max interior gap between W' and centered differences of W"""
        centered = (self.w[2:] - self.w[:-2]) / (2.0 * self.grid.dx)
        return float(np.max(np.abs(centered - self.w_prime[1:-1])))


@dataclass
class GridOperator:
    """Sparse real operator on a SpatialGrid with a known half bandwidth"""
    grid: SpatialGrid
    matrix: scipy.sparse.csr_matrix
    bandwidth: int
    boundary: str = "dirichlet"

    def __post_init__(self):
        self.matrix = scipy.sparse.csr_matrix(self.matrix)
        n = self.grid.n_points
        if self.matrix.shape != (n, n):
            raise ValidationError(f"GridOperator must be {n}x{n}, got {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix.data)):
            raise ValidationError("GridOperator has non-finite entries")

    def __matmul__(self, other: "GridOperator") -> "GridOperator":
        if isinstance(other, GridOperator):
            if other.grid != self.grid:
                raise ValidationError("GridOperator product on different grids")
            return GridOperator(self.grid, self.matrix @ other.matrix, self.bandwidth + other.bandwidth,
                                self.boundary)
        return self.matrix @ np.asarray(other)

    def __sub__(self, other: "GridOperator") -> "GridOperator":
        if other.grid != self.grid:
            raise ValidationError("GridOperator difference on different grids")
        return GridOperator(self.grid, self.matrix - other.matrix, max(self.bandwidth, other.bandwidth),
                            self.boundary)

    def transpose(self) -> "GridOperator":
        return GridOperator(self.grid, self.matrix.T.tocsr(), self.bandwidth, self.boundary)

    def shifted(self, value: float) -> "GridOperator":
        identity = scipy.sparse.identity(self.grid.n_points, format="csr")
        return GridOperator(self.grid, self.matrix - value * identity, self.bandwidth, self.boundary)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def interior_max(self, margin: int) -> float:
        """Max-entry norm over rows at least `margin` samples from either wall"""
        rows = self.matrix[self.grid.interior(margin)]
        return float(np.max(np.abs(rows.data))) if rows.nnz else 0.0

    def symmetry_defect(self, margin: int = 0) -> float:
        return GridOperator(self.grid, self.matrix - self.matrix.T, self.bandwidth).interior_max(margin)


@dataclass
class GridWavefunction:
    grid: SpatialGrid
    samples: np.ndarray
    normalized: bool = False

    def norm(self) -> float:
        return float(np.sqrt(trapezoid(np.abs(self.samples) ** 2, dx=self.grid.dx)))

    def boundary_ratio(self) -> float:
        """max(|psi| at the end samples) / max |psi|"""
        peak = float(np.max(np.abs(self.samples)))
        if peak == 0.0:
            return float('inf')
        return max(abs(self.samples[0]), abs(self.samples[-1])) / peak

    def overlap(self, other: np.ndarray) -> float:
        """|<self|other>| / (||self|| ||other||) with trapezoid weights"""
        other = np.asarray(other)
        dx = self.grid.dx
        inner = trapezoid(np.conj(self.samples) * other, dx=dx)
        norms = np.sqrt(trapezoid(np.abs(self.samples) ** 2, dx=dx) * trapezoid(np.abs(other) ** 2, dx=dx))
        return float(abs(inner) / norms)


def first_difference(grid: SpatialGrid, order: int = 4) -> GridOperator:
    """Centered, antisymmetric first derivative with zero samples beyond the walls"""
    if order not in FIRST_DIFFERENCE_STENCILS:
        raise ValidationError(f"stencil order must be one of {sorted(FIRST_DIFFERENCE_STENCILS)}, got {order}")
    coeffs = FIRST_DIFFERENCE_STENCILS[order]
    n = grid.n_points
    diagonals, offsets = [], []
    for k, c in enumerate(coeffs, start=1):
        if k >= n:
            break
        diagonals += [np.full(n - k, c / grid.dx), np.full(n - k, -c / grid.dx)]
        offsets += [k, -k]
    matrix = scipy.sparse.diags(diagonals, offsets, shape=(n, n), format="csr")
    return GridOperator(grid, matrix, len(coeffs))


def second_difference(grid: SpatialGrid) -> GridOperator:
    n = grid.n_points
    inv = 1.0 / grid.dx ** 2
    matrix = scipy.sparse.diags(
        [np.full(n - 1, inv), np.full(n, -2.0 * inv), np.full(n - 1, inv)], [-1, 0, 1],
        shape=(n, n), format="csr",
    )
    return GridOperator(grid, matrix, 1)


def diagonal(grid: SpatialGrid, values: np.ndarray) -> GridOperator:
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n_points,):
        raise ValidationError(f"Diagonal needs {grid.n_points} samples, got {values.shape}")
    return GridOperator(grid, scipy.sparse.diags(values, 0, format="csr"), 0)


def lowest_eigenpairs(op: GridOperator, count: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lowest `count` eigenpairs of a symmetric banded GridOperator.

    Returns ascending eigenvalues and eigenvectors as columns, each column
    signed so its largest-magnitude entry is positive.
    """
    n = op.grid.n_points
    count = max(1, min(int(count), n))
    u = min(op.bandwidth, n - 1)
    sym = 0.5 * (op.matrix + op.matrix.T)
    bands = np.zeros((u + 1, n))
    for k in range(u + 1):
        bands[u - k, k:] = sym.diagonal(k)
    values, vectors = scipy.linalg.eig_banded(bands, lower=False, select='i', select_range=(0, count - 1))
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return values, vectors * signs
