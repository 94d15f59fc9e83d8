import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.sparse
from scipy.integrate import cumulative_trapezoid

from lib.errors import NormalizationError, ValidationError
from lib.spatial import (
    GridOperator,
    GridWavefunction,
    SpatialGrid,
    SuperpotentialField,
    diagonal,
    first_difference,
    lowest_eigenpairs,
    second_difference,
)

BOUNDARY_POLICIES = ('decay', 'box')


@dataclass(frozen=True)
class PhysParams:
    hbar: float = 1.0
    mass: float = 0.5

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise ValidationError(f"hbar and mass must be > 0, got hbar={self.hbar}, mass={self.mass}")

    @property
    def c(self) -> float:
        """hbar / sqrt(2 m), the scale in front of every derivative"""
        return self.hbar / np.sqrt(2.0 * self.mass)

    @property
    def kinetic(self) -> float:
        """hbar^2 / 2m"""
        return self.hbar ** 2 / (2.0 * self.mass)


@dataclass
class SusyTolerances:
    ground_overlap: float = 1e-6
    boundary_decay: float = 1e-8
    doubler_smoothness: float = 0.5
    # a partner "matches" V - eps0 when its interior deviation is below this
    shift_match: float = 1e-4
    probe_count: int = 5


@dataclass
class ShiftIdentityResult:
    epsilon0: float
    deviation_plus: float
    deviation_minus: float
    matched: str
    ground_overlap: float
    box_constant: float = 0.0

    @property
    def matched_deviation(self) -> float:
        return min(self.deviation_plus, self.deviation_minus)


@dataclass
class SpectrumReport:
    eigenvalues_minus: np.ndarray
    eigenvalues_plus: np.ndarray
    pairing: pd.DataFrame
    n_pairs: int
    defects: Dict[str, float] = field(default_factory=dict)
    epsilon0: Optional[float] = None
    eigenvalues_base: Optional[np.ndarray] = None
    degenerate_free_case: bool = False

    @property
    def max_pair_deviation(self) -> float:
        return float(self.pairing['pair_deviation'].max()) if len(self.pairing) else 0.0

    def to_frame(self) -> pd.DataFrame:
        return self.pairing[['n', 'E_minus', 'E_plus', 'pair_deviation']]

    def base_frame(self) -> pd.DataFrame:
        """Lowest levels of the base Hamiltonian H"""
        levels = np.asarray(self.eigenvalues_base if self.eigenvalues_base is not None else [], dtype=float)
        return pd.DataFrame({'n': np.arange(levels.size), 'E_base': levels})


class SusyService:
    """Supersymmetric partner construction and checks on a 1-D grid"""

    def __init__(self, tolerances: SusyTolerances = None, stencil_order: int = 4):
        self.tol = tolerances or SusyTolerances()
        self.stencil_order = stencil_order
        self.logger = logging.getLogger(__name__)

    def ground_state_from_w(self, w: SuperpotentialField, grid: SpatialGrid, params: PhysParams,
                            boundary_policy: str = 'decay') -> GridWavefunction:
        """
        psi0(x) proportional to exp[-(sqrt(2m)/hbar) int_{x_min}^x W], normalised
        with trapezoid weights. The cumulative trapezoid carries the
        Euler-Maclaurin endpoint correction.
        """
        if boundary_policy not in BOUNDARY_POLICIES:
            raise ValidationError(f"boundary_policy must be one of {BOUNDARY_POLICIES}, got '{boundary_policy}'")
        if w.grid != grid:
            raise ValidationError("Superpotential sampled on a different grid")

        dx = grid.dx
        integral = cumulative_trapezoid(w.w, dx=dx, initial=0)
        integral -= (dx ** 2 / 12.0) * (w.w_prime - w.w_prime[0])
        exponent = -integral / params.c
        psi = np.exp(exponent - exponent.max())

        ratio = GridWavefunction(grid, psi).boundary_ratio()
        if ratio > self.tol.boundary_decay:
            if boundary_policy == 'decay':
                raise NormalizationError(
                    f"Ground state does not decay at the walls: boundary ratio {ratio:.3e} "
                    f"> {self.tol.boundary_decay:.1e}"
                )
            self.logger.warning(f"Accepting non-decaying ground state on the finite box (ratio {ratio:.3e})")

        psi /= GridWavefunction(grid, psi).norm()
        return GridWavefunction(grid, psi, normalized=True)

    def partner_potentials(self, w: SuperpotentialField, params: PhysParams) -> Tuple[np.ndarray, np.ndarray]:
        """V+ = W^2 + c W', V- = W^2 - c W'"""
        square = w.w ** 2
        slope = params.c * w.w_prime
        return square + slope, square - slope

    def ladder_operators(self, w: SuperpotentialField, grid: SpatialGrid,
                         params: PhysParams) -> Tuple[GridOperator, GridOperator]:
        """A = c D + W, A† = -c D + W with D the centered first difference"""
        if w.grid != grid:
            raise ValidationError("Superpotential sampled on a different grid")
        d = first_difference(grid, self.stencil_order)
        w_diag = scipy.sparse.diags(w.w, 0, format="csr")
        a = GridOperator(grid, params.c * d.matrix + w_diag, d.bandwidth)
        adag = GridOperator(grid, -params.c * d.matrix + w_diag, d.bandwidth)
        return a, adag

    def adjointness_defect(self, a: GridOperator, adag: GridOperator) -> float:
        """||A† - A^T|| on interior rows"""
        diff = GridOperator(a.grid, adag.matrix - a.matrix.T, a.bandwidth)
        return diff.interior_max(a.bandwidth)

    def partner_hamiltonians(self, a: GridOperator, adag: GridOperator) -> Tuple[GridOperator, GridOperator]:
        """(H- = A†A, H+ = AA†)"""
        if a.grid != adag.grid:
            raise ValidationError("Ladder operators live on different grids")
        return adag @ a, a @ adag

    def annihilation_defect(self, a: GridOperator, psi0: GridWavefunction) -> float:
        """||A psi0|| / ||psi0|| over interior rows"""
        sl = a.grid.interior(a.bandwidth)
        image = a.matrix @ psi0.samples
        return float(np.linalg.norm(image[sl]) / np.linalg.norm(psi0.samples[sl]))

    def _probe_defect(self, op: GridOperator, target_diag: Optional[np.ndarray] = None) -> float:
        grid = op.grid
        sl = grid.interior(max(op.bandwidth, 1))
        worst = 0.0
        for f in grid.box_modes(self.tol.probe_count):
            residual = op.matrix @ f
            if target_diag is not None:
                residual = residual - target_diag * f
            worst = max(worst, float(np.linalg.norm(residual[sl]) / np.linalg.norm(f[sl])))
        return worst

    def commutator_defect(self, a: GridOperator, adag: GridOperator, wprime: np.ndarray,
                          params: PhysParams) -> float:
        """max over box-mode probes f of ||([A, A†] - 2c W') f|| / ||f||, interior rows"""
        comm = (a @ adag) - (adag @ a)
        return self._probe_defect(comm, 2.0 * params.c * np.asarray(wprime, dtype=float))

    def base_hamiltonian(self, v_samples: np.ndarray, grid: SpatialGrid, params: PhysParams) -> GridOperator:
        """-(hbar^2/2m) D2 + V with second-order centered differences"""
        v_samples = np.asarray(v_samples, dtype=float)
        if not np.all(np.isfinite(v_samples)):
            raise ValidationError("Potential samples contain non-finite entries")
        kinetic = second_difference(grid)
        return GridOperator(grid, -params.kinetic * kinetic.matrix + diagonal(grid, v_samples).matrix, 1)

    def shift_identity_check(self, v_samples: np.ndarray, w: SuperpotentialField, grid: SpatialGrid,
                             params: PhysParams, boundary_policy: str = 'decay') -> ShiftIdentityResult:
        """
        Compare both partner potentials with V - eps0, eps0 the numerically
        lowest level of H. Reports which partner satisfies the identity.
        """
        v_samples = np.asarray(v_samples, dtype=float)
        h = self.base_hamiltonian(v_samples, grid, params)
        values, vectors = lowest_eigenpairs(h, 1)
        epsilon0 = float(values[0])

        box_constant = 0.0
        if np.all(w.w == 0.0):
            # on the finite box the free partners sit one box level below V - eps0
            box_constant = float(lowest_eigenpairs(self.base_hamiltonian(np.zeros(grid.n_points), grid, params),
                                                   1)[0][0])
            self.logger.info("Free superpotential: ground-state overlap precondition waived")
            overlap = float('nan')
        else:
            psi0 = self.ground_state_from_w(w, grid, params, boundary_policy)
            overlap = psi0.overlap(vectors[:, 0])
            if overlap < 1.0 - self.tol.ground_overlap:
                raise ValidationError(
                    f"psi0 from the superpotential is not the ground state of H (overlap {overlap:.8f})"
                )

        v_plus, v_minus = self.partner_potentials(w, params)
        target = v_samples - epsilon0 + box_constant
        sl = grid.interior(2)
        dev_plus = float(np.max(np.abs(v_plus[sl] - target[sl])))
        dev_minus = float(np.max(np.abs(v_minus[sl] - target[sl])))
        if min(dev_plus, dev_minus) > self.tol.shift_match:
            matched = 'none'
            self.logger.warning(
                f"Neither partner matches V - eps0 within {self.tol.shift_match:.1e} "
                f"(deviations {dev_plus:.3e}, {dev_minus:.3e})"
            )
        elif dev_plus == dev_minus:
            matched = 'both'
        else:
            matched = 'minus' if dev_minus < dev_plus else 'plus'
        self.logger.info(
            f"eps0={epsilon0:.8f}: |V+ - (V - eps0)|={dev_plus:.3e}, |V- - (V - eps0)|={dev_minus:.3e}"
        )
        return ShiftIdentityResult(epsilon0=epsilon0, deviation_plus=dev_plus, deviation_minus=dev_minus,
                                   matched=matched, ground_overlap=overlap, box_constant=box_constant)

    def invariance_check(self, h: GridOperator, params: PhysParams, epsilon0: float,
                         h_partner: Optional[GridOperator] = None) -> Dict[str, float]:
        """
        [H - eps0, H] is an exact identity; [A†A, H] and ||A†A - (H - eps0)||
        measure how far the partner is from the shifted base Hamiltonian.
        """
        shifted = h.shifted(epsilon0)
        self_comm = (shifted @ h) - (h @ shifted)
        h_norm = float(np.max(np.abs(h.matrix.data)))
        self_value = float(np.max(np.abs(self_comm.matrix.data))) if self_comm.matrix.nnz else 0.0
        metrics = {
            'self_commutator': self_value,
            'self_commutator_relative': self_value / h_norm ** 2,
        }
        if h_partner is not None:
            comm = (h_partner @ h) - (h @ h_partner)
            scale = float(np.max(np.abs(h_partner.matrix.data))) * h_norm
            metrics['partner_commutator_relative'] = comm.interior_max(comm.bandwidth) / scale
            metrics['discretization_defect'] = self._probe_defect(h_partner - shifted)
        return metrics

    def _physical_modes(self, values: np.ndarray, vectors: np.ndarray, threshold: float,
                        boundary_policy: str) -> np.ndarray:
        """Drop staggered doubler modes, non-decaying states and states above the continuum"""
        step = vectors[1:] - vectors[:-1]
        pair = vectors[1:] + vectors[:-1]
        rough = np.sum(step ** 2, axis=0)
        smoothness = rough / (rough + np.sum(pair ** 2, axis=0))
        keep = (smoothness < self.tol.doubler_smoothness) & (values < threshold)
        if boundary_policy == 'decay':
            peaks = np.max(np.abs(vectors), axis=0)
            edges = np.maximum(np.abs(vectors[0]), np.abs(vectors[-1]))
            keep &= edges <= 1e-6 * peaks
        return np.nonzero(keep)[0]

    def pairing_report(self, h_minus: GridOperator, h_plus: GridOperator, a: GridOperator,
                       n_pairs: int = 5, threshold: float = np.inf,
                       boundary_policy: str = 'decay') -> SpectrumReport:
        """Match E+_n with E-_(n+1) and measure intertwining A H- = H+ A"""
        if n_pairs < 1:
            raise ValidationError(f"n_pairs must be >= 1, got {n_pairs}")
        count = 4 * n_pairs + 8
        em_vals, em_vecs = lowest_eigenpairs(h_minus, count)
        ep_vals, ep_vecs = lowest_eigenpairs(h_plus, count)
        keep_m = self._physical_modes(em_vals, em_vecs, threshold, boundary_policy)
        keep_p = self._physical_modes(ep_vals, ep_vecs, threshold, boundary_policy)
        em, ep = em_vals[keep_m], ep_vals[keep_p]
        em_states = em_vecs[:, keep_m]

        k = max(0, min(n_pairs, len(em) - 1, len(ep)))
        if k < n_pairs:
            self.logger.warning(f"Only {k} bound pairs below the continuum threshold, requested {n_pairs}")

        e_minus = em[1:k + 1]
        e_plus = ep[:k]
        deviation = np.abs(e_plus - e_minus)
        pairing = pd.DataFrame({
            'n': np.arange(k),
            'E_minus': e_minus,
            'E_plus': e_plus,
            'pair_deviation': deviation,
            'relative_deviation': deviation / np.maximum(np.abs(e_minus), np.finfo(float).tiny),
        })

        defects = self._intertwining_defects(h_minus, h_plus, a, em[:k + 1], em_states[:, :k + 1])
        degenerate = bool(np.all(a.matrix.diagonal() == 0.0))
        if degenerate:
            self.logger.warning("W = 0: partner Hamiltonians coincide, pairing is a pure index shift")

        return SpectrumReport(eigenvalues_minus=em, eigenvalues_plus=ep, pairing=pairing, n_pairs=k,
                              defects=defects, degenerate_free_case=degenerate)

    def _intertwining_defects(self, h_minus: GridOperator, h_plus: GridOperator, a: GridOperator,
                              energies: np.ndarray, states: np.ndarray) -> Dict[str, Any]:
        left = a @ h_minus
        right = h_plus @ a
        scale = float(np.max(np.abs(a.matrix.data))) * float(np.max(np.abs(h_minus.matrix.data)))
        defects = {'intertwining_matrix': (left - right).interior_max(0) / scale}

        sl = a.grid.interior(left.bandwidth)
        worst_state, worst_mapped = 0.0, 0.0
        for n in range(min(3, states.shape[1])):
            psi = states[:, n]
            residual = a.matrix @ (h_minus.matrix @ psi) - h_plus.matrix @ (a.matrix @ psi)
            worst_state = max(worst_state, float(np.linalg.norm(residual[sl]) / np.linalg.norm(psi[sl])))
        for n in range(1, states.shape[1]):
            image = a.matrix @ states[:, n]
            residual = h_plus.matrix @ image - energies[n] * image
            worst_mapped = max(worst_mapped, float(np.linalg.norm(residual[sl]) / np.linalg.norm(image[sl])))
        defects['intertwining'] = worst_state
        defects['mapped_state_residual'] = worst_mapped
        return defects
