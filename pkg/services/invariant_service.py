import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

from lib.errors import DegeneracyError, GaugeError, StepSizeError, ValidationError
from lib.operators import (
    OperatorPath,
    TimeGrid,
    dagger,
    eigh,
    eigh_stack,
    frobenius_norm,
    max_norm,
    require_hermitian,
    require_hermitian_stack,
    require_normalized,
    step_propagators,
    time_derivative,
)

RESIDUAL_NORMS = ('max', 'frobenius')


@dataclass
class InvariantTolerances:
    residual: float = 1e-6
    hermitian: float = 1e-10
    degeneracy_gap: float = 1e-8
    min_overlap: float = 0.5
    unitary: float = 1e-10
    normalization: float = 1e-10
    reduction_variation: float = 1e-8


@dataclass
class InvariantPath:
    """Propagated invariant I(t_k) with its Liouville-von Neumann residuals"""
    path: OperatorPath
    residuals: np.ndarray
    residual_tol: float

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if self.residuals.size else 0.0

    @property
    def within_tolerance(self) -> bool:
        return self.max_residual <= self.residual_tol

    @property
    def spectrum_spread(self) -> float:
        values = np.linalg.eigvalsh(0.5 * (self.path.samples + dagger(self.path.samples)))
        return float(np.max(values.max(axis=0) - values.min(axis=0)))


@dataclass
class EigenframePath:
    """Mode-matched, gauge-fixed eigenvectors of an invariant over time"""
    grid: TimeGrid
    eigenvalues: np.ndarray
    eigenvalue_samples: np.ndarray
    frames: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.frames.shape[2]

    @property
    def spectrum_spread(self) -> float:
        spread = self.eigenvalue_samples.max(axis=0) - self.eigenvalue_samples.min(axis=0)
        return float(np.max(spread))

    def consecutive_overlaps(self) -> np.ndarray:
        """<lambda_n(t_k)|lambda_n(t_k+1)> for every consecutive pair, shape (n_steps, n_modes)"""
        return np.einsum("kim,kim->km", self.frames[:-1].conj(), self.frames[1:])

    def orthonormality_defect(self) -> float:
        gram = np.einsum("kim,kin->kmn", self.frames.conj(), self.frames)
        return max_norm(gram - np.eye(self.n_modes))


@dataclass
class PhaseRecord:
    grid: TimeGrid
    total: np.ndarray
    dynamical: np.ndarray
    geometric: np.ndarray
    gauge_defect: float = 0.0

    def to_frame(self) -> pd.DataFrame:
        n_times, n_modes = self.total.shape
        return pd.DataFrame({
            't': np.repeat(self.grid.times, n_modes),
            'mode': np.tile(np.arange(n_modes), n_times),
            'phi_total': self.total.ravel(),
            'phi_dynamical': self.dynamical.ravel(),
            'phi_geometric': self.geometric.ravel(),
        })


@dataclass
class LRSolution:
    grid: TimeGrid
    coefficients: np.ndarray
    states: np.ndarray

    @property
    def norm_defect(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.states, axis=1) - 1.0)))


@dataclass
class ReductionResult:
    """Invariant and Hamiltonian after the time-dependent unitary V(t)"""
    i_v: OperatorPath
    h_v: OperatorPath
    v_path: OperatorPath
    iv_variation: float
    hv_hermiticity_defect: float
    diagonal: Optional[np.ndarray] = None
    offdiagonal_defect: float = 0.0


@dataclass
class DiagonalCheck:
    eigenvalues: np.ndarray
    diagonal: np.ndarray
    integrated: np.ndarray
    offdiagonal_series: np.ndarray
    offdiagonal_defect: float
    gauge_offsets: Optional[np.ndarray] = None
    phi_gauge_corrected: Optional[np.ndarray] = None
    phase_mismatch: Optional[float] = None

    def to_frame(self, grid: TimeGrid) -> pd.DataFrame:
        n_times, n_modes = self.diagonal.shape
        corrected = self.phi_gauge_corrected
        if corrected is None:
            corrected = np.full_like(self.diagonal, np.nan)
        return pd.DataFrame({
            't': np.repeat(grid.times, n_modes),
            'mode': np.tile(np.arange(n_modes), n_times),
            'diagonal': self.diagonal.ravel(),
            'integrated_diagonal': self.integrated.ravel(),
            'phi_gauge_corrected': corrected.ravel(),
        })


class InvariantService:
    """Lewis-Riesenfeld invariant propagation, eigenframes, phases and unitary reduction"""

    def __init__(self, tolerances: InvariantTolerances = None):
        self.tol = tolerances or InvariantTolerances()
        self.logger = logging.getLogger(__name__)

    def propagate_invariant(self, h_path: OperatorPath, i0: np.ndarray) -> InvariantPath:
        """Transport a Hermitian seed: I(t_k) = U_k i0 U_k† with midpoint step propagators"""
        i0 = require_hermitian(i0, "seed invariant", self.tol.hermitian)
        require_hermitian_stack(h_path.samples, "Hamiltonian samples", self.tol.hermitian)
        if i0.shape[0] != h_path.dim:
            raise ValidationError(f"Seed dimension {i0.shape[0]} does not match Hamiltonian {h_path.dim}")

        grid = h_path.grid
        midpoints = 0.5 * (h_path.samples[:-1] + h_path.samples[1:])
        steps = step_propagators(midpoints, grid.dt)

        samples = np.empty_like(h_path.samples)
        samples[0] = i0
        u = np.eye(h_path.dim, dtype=complex)
        for k, step in enumerate(steps):
            u = step @ u
            samples[k + 1] = u @ i0 @ u.conj().T

        path = OperatorPath(grid=grid, samples=samples)
        inv = InvariantPath(path=path, residuals=self.invariant_residual(path, h_path),
                            residual_tol=self.tol.residual)
        if not inv.within_tolerance:
            self.logger.warning(
                f"Invariant residual {inv.max_residual:.3e} exceeds tolerance {self.tol.residual:.1e}"
            )
        else:
            self.logger.info(f"Propagated invariant over {grid.n_steps} steps, max residual {inv.max_residual:.3e}")
        return inv

    def invariant_residual(self, i_path: OperatorPath, h_path: OperatorPath, norm: str = 'max') -> np.ndarray:
        """||dI/dt + (1/i)[I, H]|| at interior steps, centered differences; max-entry or Frobenius"""
        if norm not in RESIDUAL_NORMS:
            raise ValidationError(f"norm must be one of {RESIDUAL_NORMS}, got '{norm}'")
        i_path.require_compatible(h_path, "invariant and Hamiltonian")
        if i_path.grid.n_steps < 2:
            raise ValidationError("Residual needs at least 2 steps")
        inv = i_path.samples
        ham = h_path.samples[1:-1]
        d_inv = (inv[2:] - inv[:-2]) / (2.0 * i_path.grid.dt)
        bracket = inv[1:-1] @ ham - ham @ inv[1:-1]
        residual = d_inv - 1j * bracket
        if norm == 'frobenius':
            return np.array([frobenius_norm(r) for r in residual])
        return np.max(np.abs(residual), axis=(1, 2))

    def track_eigenframe(self, inv: Union[InvariantPath, OperatorPath]) -> EigenframePath:
        """Per-step eigh, overlap mode matching and parallel-transport gauge fixing"""
        path = inv.path if isinstance(inv, InvariantPath) else inv
        samples, grid = path.samples, path.grid
        values, vectors = eigh_stack(samples)
        n_modes = values.shape[1]

        if n_modes > 1:
            gaps = np.min(np.diff(values, axis=1), axis=1)
            scale = max(1.0, float(np.max(np.abs(values))))
            bad = np.nonzero(gaps < self.tol.degeneracy_gap * scale)[0]
            if bad.size:
                step = int(bad[0])
                raise DegeneracyError(step, float(gaps[step]), self.tol.degeneracy_gap * scale)

        frames = np.empty_like(vectors)
        eig_out = np.empty_like(values)

        first = vectors[0].copy()
        # deterministic start: largest component of each eigenvector real positive
        pivots = np.argmax(np.abs(first), axis=0)
        lead = first[pivots, np.arange(n_modes)]
        frames[0] = first * (np.abs(lead) / lead)
        eig_out[0] = values[0]

        for k in range(1, samples.shape[0]):
            prev = frames[k - 1]
            curr = vectors[k]
            weights = np.abs(prev.conj().T @ curr) ** 2
            perm = np.argmax(weights, axis=1)
            best = weights[np.arange(n_modes), perm]
            if len(set(perm.tolist())) != n_modes or best.min() < self.tol.min_overlap:
                raise StepSizeError(k, float(best.min()))
            curr = curr[:, perm]
            ov = np.einsum("im,im->m", prev.conj(), curr)
            frames[k] = curr * (np.abs(ov) / ov)
            eig_out[k] = values[k][perm]

        frame = EigenframePath(grid=grid, eigenvalues=eig_out[0].copy(),
                               eigenvalue_samples=eig_out, frames=frames)
        self.logger.info(f"Tracked {n_modes} modes, spectrum spread {frame.spectrum_spread:.3e}")
        return frame

    def compute_phases(self, frame: EigenframePath, h_path: OperatorPath,
                       gauge_tol: Optional[float] = None) -> PhaseRecord:
        """
        phi_n(t) = int <lambda_n|H - i d/dt|lambda_n> dt', split into its
        dynamical and geometric parts, trapezoid on the shared grid.
        """
        if not frame.grid.matches(h_path.grid):
            raise ValidationError("Grid mismatch between eigenframe and Hamiltonian")
        if frame.frames.shape[1] != h_path.dim:
            raise ValidationError("Dimension mismatch between eigenframe and Hamiltonian")

        dt = frame.grid.dt
        vecs = frame.frames
        dyn = np.einsum("kim,kij,kjm->km", vecs.conj(), h_path.samples, vecs).real
        geo_complex = -1j * np.einsum("kim,kim->km", vecs.conj(), time_derivative(vecs, dt))

        if gauge_tol is None:
            gauge_tol = max(1e-9, 50.0 * dt ** 2)
        gauge_defect = float(np.max(np.abs(geo_complex.imag)))
        if gauge_defect > gauge_tol:
            worst = np.unravel_index(np.argmax(np.abs(geo_complex.imag)), geo_complex.shape)
            raise GaugeError(
                f"Geometric integrand non-real at step {worst[0]}, mode {worst[1]}: "
                f"{gauge_defect:.3e} > {gauge_tol:.3e}"
            )
        geo = geo_complex.real

        phi_dyn = cumulative_trapezoid(dyn, dx=dt, axis=0, initial=0)
        phi_geo = cumulative_trapezoid(geo, dx=dt, axis=0, initial=0)
        return PhaseRecord(grid=frame.grid, total=phi_dyn + phi_geo, dynamical=phi_dyn,
                           geometric=phi_geo, gauge_defect=gauge_defect)

    def project_initial(self, psi0: np.ndarray, frame_t0: np.ndarray) -> np.ndarray:
        """C_n = <lambda_n, t0 | psi(t0)>"""
        psi0 = require_normalized(psi0, "initial state", self.tol.normalization)
        frame_t0 = np.asarray(frame_t0, dtype=complex)
        if frame_t0.shape[0] != psi0.shape[0]:
            raise ValidationError(f"Frame dimension {frame_t0.shape[0]} does not match state {psi0.shape[0]}")
        return frame_t0.conj().T @ psi0

    def assemble_solution(self, c: np.ndarray, phases: PhaseRecord, frame: EigenframePath) -> LRSolution:
        """psi(t_k) = sum_n C_n exp[(1/i) phi_n(t_k)] |lambda_n, t_k>"""
        c = np.asarray(c, dtype=complex)
        if c.shape[0] != frame.n_modes or phases.total.shape[1] != frame.n_modes:
            raise ValidationError(
                f"Mode count mismatch: {c.shape[0]} coefficients, {phases.total.shape[1]} phases, "
                f"{frame.n_modes} frame modes"
            )
        if not phases.grid.matches(frame.grid):
            raise ValidationError("Grid mismatch between phases and eigenframe")
        weights = c[None, :] * np.exp(-1j * phases.total)
        states = np.einsum("kim,km->ki", frame.frames, weights)
        return LRSolution(grid=frame.grid, coefficients=c, states=states)

    def direct_schrodinger(self, h_path: OperatorPath, psi0: np.ndarray) -> np.ndarray:
        """Midpoint exponential integration of i d|psi>/dt = H|psi>"""
        psi0 = require_normalized(psi0, "initial state", self.tol.normalization)
        require_hermitian_stack(h_path.samples, "Hamiltonian samples", self.tol.hermitian)
        if psi0.shape[0] != h_path.dim:
            raise ValidationError(f"State dimension {psi0.shape[0]} does not match Hamiltonian {h_path.dim}")

        midpoints = 0.5 * (h_path.samples[:-1] + h_path.samples[1:])
        steps = step_propagators(midpoints, h_path.grid.dt)
        states = np.empty((h_path.grid.n_steps + 1, h_path.dim), dtype=complex)
        states[0] = psi0
        for k, step in enumerate(steps):
            states[k + 1] = step @ states[k]
        return states

    def unitary_reduce(self, v_path: OperatorPath, i_path: OperatorPath,
                       h_path: OperatorPath) -> ReductionResult:
        """I_V = V† I V and H_V = V† H V - V† i dV/dt"""
        v_path.require_compatible(i_path, "V and invariant")
        v_path.require_compatible(h_path, "V and Hamiltonian")
        v = v_path.samples
        v_dag = dagger(v)
        unit_defects = np.max(np.abs(v_dag @ v - np.eye(v_path.dim)), axis=(1, 2))
        worst = int(np.argmax(unit_defects))
        if unit_defects[worst] > self.tol.unitary:
            raise ValidationError(f"V(t) not unitary at step {worst} (defect {unit_defects[worst]:.3e})")

        i_v = v_dag @ i_path.samples @ v
        h_v = v_dag @ h_path.samples @ v - v_dag @ (1j * time_derivative(v, v_path.grid.dt))

        variation = float(np.max(np.abs(i_v - i_v[0]))) if i_v.size else 0.0
        herm = float(np.max(np.abs(h_v - dagger(h_v))))
        if variation > self.tol.reduction_variation:
            self.logger.warning(f"Transformed invariant varies in time by {variation:.3e}")

        _, basis = eigh(i_v[0])
        in_basis = dagger(basis)[None] @ h_v @ basis[None]
        diagonal = np.real(np.diagonal(in_basis, axis1=1, axis2=2))
        off = in_basis - np.einsum("km,mn->kmn", np.diagonal(in_basis, axis1=1, axis2=2), np.eye(v_path.dim))

        return ReductionResult(
            i_v=OperatorPath(grid=v_path.grid, samples=i_v),
            h_v=OperatorPath(grid=v_path.grid, samples=h_v),
            v_path=v_path,
            iv_variation=variation,
            hv_hermiticity_defect=herm,
            diagonal=diagonal,
            offdiagonal_defect=max_norm(off),
        )

    def check_reduced_diagonal(self, red: ReductionResult, frame_iv: Optional[np.ndarray] = None,
                               phases: Optional[PhaseRecord] = None,
                               frame: Optional[EigenframePath] = None) -> DiagonalCheck:
        """
        Express H_V in the I_V eigenbasis; report the diagonal d_n(t), the
        off-diagonal defect and, when LR phases are supplied, compare the
        integrated diagonal with phi_n after removing the frame gauge offset.
        """
        if red.iv_variation > self.tol.reduction_variation:
            self.logger.warning(
                f"I_V not time-independent (variation {red.iv_variation:.3e}); "
                f"diagonal check uses the I_V(t0) eigenbasis"
            )
        grid = red.h_v.grid
        if frame_iv is None:
            eigenvalues, frame_iv = eigh(red.i_v.samples[0])
        else:
            frame_iv = np.asarray(frame_iv, dtype=complex)
            eigenvalues = np.real(np.einsum("im,ij,jm->m", frame_iv.conj(), red.i_v.samples[0], frame_iv))

        in_basis = dagger(frame_iv)[None] @ red.h_v.samples @ frame_iv[None]
        diag_complex = np.diagonal(in_basis, axis1=1, axis2=2)
        off = in_basis - np.einsum("km,mn->kmn", diag_complex, np.eye(frame_iv.shape[1]))
        off_series = np.max(np.abs(off), axis=(1, 2))
        diagonal = diag_complex.real
        integrated = cumulative_trapezoid(diagonal, dx=grid.dt, axis=0, initial=0)

        check = DiagonalCheck(
            eigenvalues=eigenvalues,
            diagonal=diagonal,
            integrated=integrated,
            offdiagonal_series=off_series,
            offdiagonal_defect=float(np.max(off_series)),
        )

        if phases is not None and frame is not None:
            if frame.n_modes != frame_iv.shape[1]:
                raise ValidationError("Mode count mismatch between LR frame and I_V basis")
            transported = red.v_path.samples @ frame_iv[None]
            overlaps = np.einsum("kim,kim->km", transported.conj(), frame.frames)
            offsets = np.unwrap(np.angle(overlaps), axis=0)
            offsets = offsets - offsets[0]
            corrected = phases.total - offsets
            check.gauge_offsets = offsets
            check.phi_gauge_corrected = corrected
            check.phase_mismatch = float(np.max(np.abs(integrated - corrected)))
            self.logger.info(f"Reduced diagonal vs LR phase mismatch {check.phase_mismatch:.3e}")

        return check
