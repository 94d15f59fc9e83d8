"""
Dense complex operator substrate: time grids, operator paths, hermiticity and
unitarity checks, commutators, Hermitian eigendecomposition and short-time
propagators.

Matrices and state vectors are plain numpy arrays (complex128). Everything in
here is a pure function of its inputs.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
import scipy.linalg

from lib.errors import ValidationError

logger = logging.getLogger(__name__)

DEFAULT_HERMITIAN_TOL = 1e-10
DEFAULT_NORM_TOL = 1e-10


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid t_k = t0 + k*dt, k = 0..n_steps"""
    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise ValidationError(f"TimeGrid dt must be > 0, got {self.dt}")
        if int(self.n_steps) < 1:
            raise ValidationError(f"TimeGrid n_steps must be >= 1, got {self.n_steps}")

    @classmethod
    def from_span(cls, t_final: float, dt: float, t0: float = 0.0) -> "TimeGrid":
        """Grid ending exactly at t_final with spacing as close to dt as possible"""
        if dt <= 0:
            raise ValidationError(f"dt must be > 0, got {dt}")
        n_steps = max(1, int(round((t_final - t0) / dt)))
        return cls(t0=t0, dt=(t_final - t0) / n_steps, n_steps=n_steps)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def t_final(self) -> float:
        return self.t0 + self.dt * self.n_steps

    def refine(self, factor: int) -> "TimeGrid":
        """Same span, dt divided by an integer factor"""
        factor = int(factor)
        if factor < 1:
            raise ValidationError(f"Refinement factor must be >= 1, got {factor}")
        return TimeGrid(t0=self.t0, dt=self.dt / factor, n_steps=self.n_steps * factor)

    def matches(self, other: "TimeGrid") -> bool:
        return (
            self.n_steps == other.n_steps
            and np.isclose(self.t0, other.t0, rtol=0, atol=1e-12 * max(1.0, abs(self.t0)))
            and np.isclose(self.dt, other.dt, rtol=1e-12, atol=0)
        )


@dataclass
class OperatorPath:
    """Time-sampled sequence of square complex matrices, one per grid point"""
    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.ndim != 3 or self.samples.shape[1] != self.samples.shape[2]:
            raise ValidationError(
                f"OperatorPath samples must have shape (n, d, d), got {self.samples.shape}"
            )
        if self.samples.shape[0] != self.grid.n_steps + 1:
            raise ValidationError(
                f"OperatorPath needs {self.grid.n_steps + 1} samples, got {self.samples.shape[0]}"
            )
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("OperatorPath samples contain non-finite entries")

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable[[float], np.ndarray]) -> "OperatorPath":
        return cls(grid=grid, samples=np.array([fn(t) for t in grid.times], dtype=complex))

    @classmethod
    def constant(cls, grid: TimeGrid, m: np.ndarray) -> "OperatorPath":
        m = np.asarray(m, dtype=complex)
        return cls(grid=grid, samples=np.broadcast_to(m, (grid.n_steps + 1,) + m.shape).copy())

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return self.samples.shape[0]

    def midpoint(self, k: int) -> np.ndarray:
        """Linear interpolation of the samples at t_k + dt/2"""
        return 0.5 * (self.samples[k] + self.samples[k + 1])

    def require_compatible(self, other: "OperatorPath", what: str = "paths"):
        if not self.grid.matches(other.grid):
            raise ValidationError(f"Grid mismatch between {what}")
        if self.dim != other.dim:
            raise ValidationError(f"Dimension mismatch between {what}: {self.dim} vs {other.dim}")


def max_norm(m: np.ndarray) -> float:
    """Max-entry norm, used for all defect metrics"""
    m = np.asarray(m)
    return float(np.max(np.abs(m))) if m.size else 0.0


def frobenius_norm(m: np.ndarray) -> float:
    """Frobenius norm, used for residual summaries next to the max-entry defects"""
    return float(np.linalg.norm(np.asarray(m)))


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def _require_square(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {m.shape}")
    return m


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """[a, b] = ab - ba"""
    a = _require_square(a, "a")
    b = _require_square(b, "b")
    if a.shape != b.shape:
        raise ValidationError(f"Dimension mismatch in commutator: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def check_hermitian(m: np.ndarray, tol: float = DEFAULT_HERMITIAN_TOL) -> Tuple[bool, float]:
    """Returns (defect <= tol, defect) with defect the max-entry norm of m - m†"""
    m = _require_square(m)
    defect = max_norm(m - m.conj().T)
    return defect <= tol, defect


def check_unitary(u: np.ndarray, tol: float = 1e-10) -> Tuple[bool, float]:
    u = _require_square(u)
    defect = max_norm(u.conj().T @ u - np.eye(u.shape[0]))
    return defect <= tol, defect


def require_hermitian(m: np.ndarray, name: str = "matrix", tol: float = DEFAULT_HERMITIAN_TOL) -> np.ndarray:
    m = _require_square(m, name)
    scale = max(1.0, max_norm(m))
    ok, defect = check_hermitian(m, tol * scale)
    if not ok:
        raise ValidationError(f"{name} is not Hermitian (defect {defect:.3e})")
    return m


def eigh(m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Hermitian eigendecomposition.

    Returns ascending real eigenvalues and a matrix whose columns are the
    orthonormal eigenvectors.
    """
    m = require_hermitian(m)
    # symmetrise so roundoff in the lower triangle cannot leak in
    values, vectors = scipy.linalg.eigh(0.5 * (m + m.conj().T))
    return values, vectors


def step_propagator(h: np.ndarray, dt: float) -> np.ndarray:
    """U = exp(-i h dt) built from the eigendecomposition of h"""
    values, vectors = eigh(h)
    phases = np.exp(-1j * values * dt)
    return (vectors * phases) @ vectors.conj().T


def hermitian_defects(stack: np.ndarray) -> np.ndarray:
    """Per-sample max-entry norm of m - m† for a (n, d, d) stack"""
    stack = np.asarray(stack)
    return np.max(np.abs(stack - dagger(stack)), axis=(1, 2))


def require_hermitian_stack(stack: np.ndarray, name: str = "samples", tol: float = DEFAULT_HERMITIAN_TOL):
    defects = hermitian_defects(stack)
    scale = max(1.0, max_norm(stack))
    worst = int(np.argmax(defects))
    if defects[worst] > tol * scale:
        raise ValidationError(f"{name} not Hermitian at step {worst} (defect {defects[worst]:.3e})")


def eigh_stack(stack: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Batched eigh over a (n, d, d) stack of Hermitian matrices"""
    stack = np.asarray(stack, dtype=complex)
    return np.linalg.eigh(0.5 * (stack + dagger(stack)))


def step_propagators(h_stack: np.ndarray, dt: float) -> np.ndarray:
    """Batched exp(-i h dt) for a (n, d, d) stack"""
    values, vectors = eigh_stack(h_stack)
    phases = np.exp(-1j * values * dt)
    return np.einsum("kij,kj,klj->kil", vectors, phases, vectors.conj())


def check_normalized(psi: np.ndarray, tol: float = DEFAULT_NORM_TOL) -> Tuple[bool, float]:
    psi = np.asarray(psi, dtype=complex)
    defect = abs(float(np.linalg.norm(psi)) - 1.0)
    return defect <= tol, defect


def require_normalized(psi: np.ndarray, name: str = "state", tol: float = DEFAULT_NORM_TOL) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise ValidationError(f"{name} must be a vector, got shape {psi.shape}")
    ok, defect = check_normalized(psi, tol)
    if not ok:
        raise ValidationError(f"{name} is not normalized (|norm - 1| = {defect:.3e})")
    return psi


def time_derivative(samples: np.ndarray, dt: float) -> np.ndarray:
    """
    d/dt along axis 0: centered differences in the interior, second-order
    one-sided differences at both ends.
    """
    samples = np.asarray(samples)
    if samples.shape[0] < 3:
        raise ValidationError("Time derivative needs at least 3 samples")
    return np.gradient(samples, dt, axis=0, edge_order=2)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """|<a|b>| for normalized vectors"""
    return float(abs(np.vdot(a, b)))


# Pauli matrices, used by scenario builders and tests
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)
