import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from lib.errors import GuardBreachError, ValidationError
from lib.operators import OperatorPath, TimeGrid, frobenius_norm, max_norm, require_normalized


@dataclass
class GuardLimits:
    """Hard limits that abort an integration"""
    trace: float = 1e-6
    hermiticity: float = 1e-6
    min_eigenvalue: float = -1e-6


@dataclass
class TwoLevelParams:
    """Free frequencies and sampled coupling of the two-level model H = [[w_a, V], [V*, w_b]]"""
    grid: TimeGrid
    omega_a: float
    omega_b: float
    coupling: np.ndarray

    def __post_init__(self):
        self.coupling = np.asarray(self.coupling, dtype=complex)
        if not (np.isfinite(self.omega_a) and np.isfinite(self.omega_b)):
            raise ValidationError("TwoLevelParams frequencies must be finite")
        if self.coupling.shape != (self.grid.n_steps + 1,):
            raise ValidationError(
                f"Coupling needs {self.grid.n_steps + 1} samples, got {self.coupling.shape}"
            )
        if not np.all(np.isfinite(self.coupling)):
            raise ValidationError("Coupling samples contain non-finite entries")

    def coupling_at(self, t: float) -> complex:
        """Linear interpolation of the coupling samples"""
        times = self.grid.times
        return complex(np.interp(t, times, self.coupling.real) + 1j * np.interp(t, times, self.coupling.imag))

    def hamiltonian(self, v: complex) -> np.ndarray:
        return np.array([[self.omega_a, v], [np.conj(v), self.omega_b]], dtype=complex)

    def hamiltonian_path(self) -> OperatorPath:
        samples = np.empty((self.grid.n_steps + 1, 2, 2), dtype=complex)
        samples[:, 0, 0] = self.omega_a
        samples[:, 1, 1] = self.omega_b
        samples[:, 0, 1] = self.coupling
        samples[:, 1, 0] = self.coupling.conj()
        return OperatorPath(grid=self.grid, samples=samples)


@dataclass
class DensityPath:
    grid: TimeGrid
    samples: np.ndarray
    metrics: pd.DataFrame

    @property
    def trace_drift(self) -> float:
        return float(self.metrics['trace_defect'].max())

    @property
    def hermiticity_drift(self) -> float:
        return float(self.metrics['hermiticity_defect'].max())

    @property
    def purity_drift(self) -> float:
        purity = self.metrics['purity'].to_numpy()
        return float(np.max(np.abs(purity - purity[0])))

    def to_frame(self) -> pd.DataFrame:
        """Trace table with populations, first coherence and purity"""
        return pd.DataFrame({
            't': self.grid.times,
            'rho_aa': self.samples[:, 0, 0].real,
            'rho_bb': self.samples[:, 1, 1].real,
            're_rho_ab': self.samples[:, 0, 1].real,
            'im_rho_ab': self.samples[:, 0, 1].imag,
            'purity': self.metrics['purity'].to_numpy(),
        })


def _component_derivatives(raa: complex, rbb: complex, rab: complex,
                           omega_a: float, omega_b: float, v: complex) -> Tuple[complex, complex, complex]:
    rba = rab.conjugate()
    flow = 2.0 * (1j * v * rba).real
    return -flow, flow, -1j * (omega_a - omega_b) * rab + 1j * v * (raa - rbb)


def _guard_metrics(rho: np.ndarray) -> Dict[str, float]:
    if not np.all(np.isfinite(rho)):
        nan = float('nan')
        return {'trace_defect': nan, 'hermiticity_defect': nan, 'purity': nan, 'min_eigenvalue': nan}
    return {
        'trace_defect': abs(complex(np.trace(rho)) - 1.0),
        'hermiticity_defect': max_norm(rho - rho.conj().T),
        'purity': float(np.real(np.trace(rho @ rho))),
        'min_eigenvalue': float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]),
    }


class DensityService:
    """Density operators, Liouville-von Neumann integration and pure-state consistency"""

    def __init__(self, limits: GuardLimits = None, tol: float = 1e-10):
        self.limits = limits or GuardLimits()
        self.tol = tol
        self.logger = logging.getLogger(__name__)

    def validate_density(self, rho: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
        tol = self.tol if tol is None else tol
        rho = np.asarray(rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValidationError(f"Density matrix must be square, got shape {rho.shape}")
        metrics = _guard_metrics(rho)
        if not np.isfinite(metrics['trace_defect']):
            raise ValidationError("Density matrix has non-finite entries")
        if metrics['hermiticity_defect'] > tol:
            raise ValidationError(f"Density matrix not Hermitian (defect {metrics['hermiticity_defect']:.3e})")
        if metrics['trace_defect'] > tol:
            raise ValidationError(f"Density matrix trace off by {metrics['trace_defect']:.3e}")
        if metrics['min_eigenvalue'] < -tol:
            raise ValidationError(f"Density matrix has negative eigenvalue {metrics['min_eigenvalue']:.3e}")
        return rho

    def density_from_state(self, psi: np.ndarray) -> np.ndarray:
        """rho = |psi><psi|"""
        psi = require_normalized(psi, "state", self.tol)
        return np.outer(psi, psi.conj())

    def lvn_rhs(self, rho: np.ndarray, h: np.ndarray) -> np.ndarray:
        """d rho/dt = -i [H, rho]"""
        rho = np.asarray(rho, dtype=complex)
        h = np.asarray(h, dtype=complex)
        if rho.shape != h.shape or rho.ndim != 2:
            raise ValidationError(f"Dimension mismatch: rho {rho.shape} vs H {h.shape}")
        return -1j * (h @ rho - rho @ h)

    def two_level_rhs(self, components: np.ndarray, params: TwoLevelParams, t: float) -> np.ndarray:
        """Component equations for (rho_aa, rho_bb, rho_ab); rho_ba is the conjugate of rho_ab"""
        raa, rbb, rab = (complex(c) for c in components)
        return np.array(
            _component_derivatives(raa, rbb, rab, params.omega_a, params.omega_b, params.coupling_at(t)),
            dtype=complex,
        )

    def integrate_lvn(self, source: Union[TwoLevelParams, OperatorPath], rho0: np.ndarray,
                      grid: Optional[TimeGrid] = None) -> DensityPath:
        """
        Fixed-step RK4. TwoLevelParams integrate the component equations,
        an OperatorPath integrates the full matrix equation. Hamiltonian and
        coupling at the interior stage are the average of the neighbouring
        samples. No trace renormalisation is applied.
        """
        rho0 = self.validate_density(rho0)
        grid = grid or source.grid
        if not grid.matches(source.grid):
            raise ValidationError("Grid mismatch between source and integration grid")

        if isinstance(source, TwoLevelParams):
            if rho0.shape != (2, 2):
                raise ValidationError(f"Two-level integration needs a 2x2 rho0, got {rho0.shape}")
            samples, rows = self._integrate_components(source, rho0)
        else:
            if rho0.shape[0] != source.dim:
                raise ValidationError(f"rho0 dimension {rho0.shape[0]} does not match H {source.dim}")
            samples, rows = self._integrate_matrix(source, rho0)

        metrics = pd.DataFrame(rows)
        metrics.insert(0, 't', grid.times)
        path = DensityPath(grid=grid, samples=samples, metrics=metrics)
        self.logger.info(
            f"Integrated {grid.n_steps} RK4 steps: trace drift {path.trace_drift:.3e}, "
            f"purity drift {path.purity_drift:.3e}"
        )
        return path

    def _guard(self, step: int, rho: np.ndarray, rho0_purity: float) -> Dict[str, float]:
        metrics = _guard_metrics(rho)
        reason = None
        if not np.isfinite(metrics['trace_defect']):
            reason = "non-finite entries"
        elif metrics['trace_defect'] > self.limits.trace:
            reason = "trace drift"
        elif metrics['hermiticity_defect'] > self.limits.hermiticity:
            reason = "hermiticity defect"
        elif metrics['min_eigenvalue'] < self.limits.min_eigenvalue:
            reason = "negative eigenvalue"
        if reason:
            metrics['purity_drift'] = metrics['purity'] - rho0_purity
            self.logger.error(f"Guard breach at step {step}: {reason}")
            raise GuardBreachError(step, reason, metrics)
        return metrics

    def _integrate_components(self, params: TwoLevelParams, rho0: np.ndarray) -> Tuple[np.ndarray, List[Dict]]:
        n = params.grid.n_steps
        dt = params.grid.dt
        wa, wb = params.omega_a, params.omega_b
        v = params.coupling
        purity0 = float(np.real(np.trace(rho0 @ rho0)))

        samples = np.empty((n + 1, 2, 2), dtype=complex)
        samples[0] = rho0
        rows = [_guard_metrics(rho0)]
        y = (complex(rho0[0, 0]), complex(rho0[1, 1]), complex(rho0[0, 1]))
        for k in range(n):
            v0, v1 = complex(v[k]), complex(v[k + 1])
            vm = 0.5 * (v0 + v1)
            k1 = _component_derivatives(*y, wa, wb, v0)
            k2 = _component_derivatives(*(y[i] + 0.5 * dt * k1[i] for i in range(3)), wa, wb, vm)
            k3 = _component_derivatives(*(y[i] + 0.5 * dt * k2[i] for i in range(3)), wa, wb, vm)
            k4 = _component_derivatives(*(y[i] + dt * k3[i] for i in range(3)), wa, wb, v1)
            y = tuple(y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(3))
            rho = np.array([[y[0], y[2]], [y[2].conjugate(), y[1]]], dtype=complex)
            rows.append(self._guard(k + 1, rho, purity0))
            samples[k + 1] = rho
        return samples, rows

    def _integrate_matrix(self, h_path: OperatorPath, rho0: np.ndarray) -> Tuple[np.ndarray, List[Dict]]:
        n = h_path.grid.n_steps
        dt = h_path.grid.dt
        purity0 = float(np.real(np.trace(rho0 @ rho0)))

        samples = np.empty((n + 1,) + rho0.shape, dtype=complex)
        samples[0] = rho0
        rows = [_guard_metrics(rho0)]
        rho = rho0
        for k in range(n):
            h0, h1 = h_path.samples[k], h_path.samples[k + 1]
            hm = 0.5 * (h0 + h1)
            k1 = self.lvn_rhs(rho, h0)
            k2 = self.lvn_rhs(rho + 0.5 * dt * k1, hm)
            k3 = self.lvn_rhs(rho + 0.5 * dt * k2, hm)
            k4 = self.lvn_rhs(rho + dt * k3, h1)
            rho = rho + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            rows.append(self._guard(k + 1, rho, purity0))
            samples[k + 1] = rho
        return samples, rows

    def observables(self, rho: np.ndarray) -> Dict[str, Any]:
        rho = np.asarray(rho, dtype=complex)
        populations = np.real(np.diag(rho))
        coherence = rho[0, 1] if rho.shape[0] > 1 else 0j
        return {
            'populations': populations,
            'rho_aa': float(populations[0]),
            'rho_bb': float(populations[1]) if populations.size > 1 else 0.0,
            're_coherence': float(np.real(coherence)),
            'im_coherence': float(np.imag(coherence)),
            'purity': float(np.real(np.trace(rho @ rho))),
            'trace': float(np.real(np.trace(rho))),
        }

    def cross_check(self, dp: DensityPath, states: np.ndarray, norm: str = 'max') -> float:
        """max_k ||rho_k - |psi_k><psi_k||| in the max-entry or Frobenius norm"""
        if norm not in ('max', 'frobenius'):
            raise ValidationError(f"norm must be max or frobenius, got '{norm}'")
        states = np.asarray(states, dtype=complex)
        if states.shape[0] != dp.samples.shape[0]:
            raise ValidationError(
                f"Grid mismatch: {dp.samples.shape[0]} density samples vs {states.shape[0]} states"
            )
        if states.shape[1] != dp.samples.shape[1]:
            raise ValidationError("Dimension mismatch between density path and states")
        projectors = np.einsum("ki,kj->kij", states, states.conj())
        diff = dp.samples - projectors
        if norm == 'frobenius':
            deviation = max(frobenius_norm(d) for d in diff)
        else:
            deviation = max_norm(diff)
        purity0 = float(dp.metrics['purity'].iloc[0])
        if purity0 < 1.0 - 1e-8:
            self.logger.warning(
                f"Mixed initial density (purity {purity0:.6f}) compared with a pure trajectory: "
                f"deviation {deviation:.3e}"
            )
        return deviation

    def density_path_deviation(self, a: DensityPath, b: DensityPath) -> float:
        if a.samples.shape != b.samples.shape:
            raise ValidationError("Density paths have different shapes")
        return max_norm(a.samples - b.samples)


def rabi_closed_form(times: np.ndarray, omega_a: float, omega_b: float, coupling: complex) -> np.ndarray:
    """
    rho_aa(t) for rho(0) = |a><a| under constant coupling:
    1 - (|V|^2 / W^2) sin^2(W t), W^2 = |V|^2 + ((w_a - w_b)/2)^2
    """
    v2 = abs(coupling) ** 2
    rabi2 = v2 + (0.5 * (omega_a - omega_b)) ** 2
    if rabi2 == 0.0:
        return np.ones_like(np.asarray(times, dtype=float))
    return 1.0 - (v2 / rabi2) * np.sin(np.sqrt(rabi2) * np.asarray(times)) ** 2

