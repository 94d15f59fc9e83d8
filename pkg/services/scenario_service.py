import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from adapters import CircularDriveAdapter, RabiAdapter, SuperpotentialAdapter, initial_state, seed_operator
from lib.config import ScenarioConfig
from lib.errors import OutputError, ToolkitError
from lib.operators import OperatorPath, TimeGrid, max_norm
from lib.spatial import SpatialGrid, lowest_eigenpairs
from lib.utils import DataUtils
from services.density_service import DensityService, rabi_closed_form
from services.invariant_service import InvariantService
from services.output_manager import OutputManager
from services.susy_service import PhysParams, SusyService
from utils.acceptance import AcceptanceManager

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

Artefacts = Tuple[Dict[str, Any], Dict[str, pd.DataFrame], Dict[str, Any]]


@dataclass
class RunReport:
    kind: str
    config: Dict[str, Any]
    metrics: Dict[str, Any] = field(default_factory=dict)
    checks: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)
    flags: Dict[str, Any] = field(default_factory=dict)
    files: List[Dict[str, Any]] = field(default_factory=list)
    enforced: bool = False
    error: Optional[str] = None
    exit_code: int = EXIT_OK
    duration_seconds: float = 0.0
    payload_sha256: str = ""
    run_dir: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'config': self.config,
            'checks': {name: {key: DataUtils.clean_metric(value) for key, value in check.items()}
                       for name, check in self.checks.items()},
            'metrics': {k: DataUtils.clean_metric(v) for k, v in sorted(self.metrics.items())},
            'flags': self.flags,
            'failures': self.failures,
            'enforced': self.enforced,
            'error': self.error,
            'exit_code': self.exit_code,
            'files': self.files,
            'duration_seconds': self.duration_seconds,
        }


def _fidelities(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(np.einsum("ki,ki->k", a.conj(), b))


def _projector_deviation(rho: np.ndarray, states: np.ndarray) -> np.ndarray:
    return np.max(np.abs(rho - np.einsum("ki,kj->kij", states, states.conj())), axis=(1, 2))


class ScenarioService:
    """Runs one configured scenario end to end and writes its run directory"""

    def __init__(self):
        self.invariants = InvariantService()
        self.density = DensityService()
        self.acceptance = AcceptanceManager()
        self.logger = logging.getLogger(__name__)
        self.runners: Dict[str, Callable[[ScenarioConfig], Artefacts]] = {
            'rabi': self._run_rabi,
            'invariant': self._run_invariant,
            'reduce': self._run_reduce,
            'susy': self._run_susy,
        }

    def run_scenario(self, cfg: ScenarioConfig, check: bool = False, write: bool = True) -> RunReport:
        """
        Execute the pipeline for cfg.kind. With `check` the acceptance
        thresholds are evaluated and any failure sets exit code 3; numeric
        errors raised by the pipeline always do.
        """
        started = time.perf_counter()
        report = RunReport(kind=cfg.kind, config=cfg.to_dict(), enforced=check, run_dir=cfg.output_dir)
        tables: Dict[str, pd.DataFrame] = {}

        self.logger.info(f"Running {cfg.kind} scenario into {cfg.output_dir}")
        try:
            metrics, tables, flags = self.runners[cfg.kind](cfg)
            report.metrics = metrics
            report.flags = flags
            if check:
                assessment = self.acceptance.evaluate(cfg.kind, metrics)
                report.checks = assessment['checks']
                report.failures = assessment['failures']
                if report.failures:
                    report.exit_code = EXIT_NUMERIC
        except ToolkitError as e:
            self.logger.error(f"{cfg.kind} scenario aborted: {e}")
            report.error = f"{type(e).__name__}: {e}"
            report.failures = [type(e).__name__]
            report.exit_code = EXIT_NUMERIC
            tables = {}

        report.duration_seconds = round(time.perf_counter() - started, 3)
        if write:
            try:
                payload = report.to_dict()
                report.files = OutputManager(cfg.output_dir).write_outputs(tables, payload)
                report.payload_sha256 = payload['payload_sha256']
            except OutputError as e:
                self.logger.error(str(e))
                report.error = str(e)
                report.failures.append('OutputError')
                report.exit_code = EXIT_IO
        return report

    def run_batch(self, configs: List[ScenarioConfig], check: bool = False, workers: int = 1) -> List[RunReport]:
        """Independent scenarios, each into its own directory, optionally on a thread pool"""
        seen: Dict[str, int] = {}
        unique = []
        for cfg in configs:
            count = seen.get(cfg.output_dir, 0)
            seen[cfg.output_dir] = count + 1
            unique.append(cfg if count == 0 else cfg.with_output_dir(f"{cfg.output_dir}_{count}"))

        if workers <= 1:
            return [self.run_scenario(cfg, check) for cfg in unique]

        reports: List[Optional[RunReport]] = [None] * len(unique)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            futures = {ex.submit(ScenarioService().run_scenario, cfg, check): i for i, cfg in enumerate(unique)}
            for f in as_completed(futures):
                reports[futures[f]] = f.result()
        return reports

    def _lr_trajectory(self, h_path: OperatorPath, seed: np.ndarray, psi0: np.ndarray):
        inv = self.invariants
        invariant = inv.propagate_invariant(h_path, seed)
        frame = inv.track_eigenframe(invariant)
        phases = inv.compute_phases(frame, h_path)
        coefficients = inv.project_initial(psi0, frame.frames[0])
        return invariant, frame, phases, inv.assemble_solution(coefficients, phases, frame)

    def _run_rabi(self, cfg: ScenarioConfig) -> Artefacts:
        grid = TimeGrid.from_span(cfg['t_final'], cfg['dt'])
        adapter = RabiAdapter.from_config(cfg)
        params = adapter.params(grid)
        psi0 = initial_state(cfg['initial_state'])
        rho0 = self.density.density_from_state(psi0)

        path = self.density.integrate_lvn(params, rho0)
        h_path = params.hamiltonian_path()
        matrix_path = self.density.integrate_lvn(h_path, rho0)

        factor = cfg['refine_factor']
        refined = self.density.integrate_lvn(adapter.params(grid.refine(factor)), rho0)
        rho_aa = path.samples[:, 0, 0].real

        direct = self.invariants.direct_schrodinger(h_path, psi0)
        invariant, frame, phases, solution = self._lr_trajectory(
            h_path, seed_operator(cfg['seed'], h_path.samples[0]), psi0
        )
        fidelity = _fidelities(solution.states, direct)

        metrics = {
            'refinement_deviation': float(np.max(np.abs(rho_aa - refined.samples[::factor, 0, 0].real))),
            'trace_drift': path.trace_drift,
            'hermiticity_drift': path.hermiticity_drift,
            'purity_drift': path.purity_drift,
            'component_vs_matrix': max_norm(path.samples - matrix_path.samples),
            'density_vs_schrodinger': self.density.cross_check(path, direct),
            'density_vs_schrodinger_frobenius': self.density.cross_check(path, direct, norm='frobenius'),
            'density_vs_lr': self.density.cross_check(path, solution.states),
            'lr_min_fidelity': float(np.min(fidelity)),
            'lr_max_residual': invariant.max_residual,
            'lr_residual_frobenius': float(np.max(
                self.invariants.invariant_residual(invariant.path, h_path, norm='frobenius'))),
            'lr_spectrum_spread': frame.spectrum_spread,
        }
        closed = np.full(grid.n_steps + 1, np.nan)
        if adapter.has_closed_form and cfg['initial_state'] == 'a':
            closed = rabi_closed_form(grid.times, adapter.omega_a, adapter.omega_b, adapter.coupling)
            metrics['closed_form_deviation'] = float(np.max(np.abs(rho_aa - closed)))

        comparison = pd.DataFrame({
            't': grid.times,
            'rho_aa_closed_form': closed,
            'schrodinger_deviation': _projector_deviation(path.samples, direct),
            'lr_deviation': _projector_deviation(path.samples, solution.states),
        })
        tables = {
            'rabi_traces.csv': path.to_frame(),
            'rabi_comparison.csv': comparison,
            'phases.csv': phases.to_frame(),
            'fidelity.csv': pd.DataFrame({'t': grid.times, 'fidelity': fidelity}),
        }
        flags = {
            'closed_form_available': 'closed_form_deviation' in metrics,
            'lr_residual_within_tolerance': invariant.within_tolerance,
        }
        return metrics, tables, flags

    def _run_invariant(self, cfg: ScenarioConfig) -> Artefacts:
        inv = self.invariants
        grid = TimeGrid.from_span(cfg['t_final'], cfg['dt'])
        adapter = CircularDriveAdapter.from_config(cfg)
        h_path = adapter.hamiltonian_path(grid)
        psi0 = initial_state(cfg['initial_state'])
        seed = seed_operator(cfg['seed'], h_path.samples[0])

        invariant, frame, phases, solution = self._lr_trajectory(h_path, seed, psi0)
        direct = inv.direct_schrodinger(h_path, psi0)
        fidelity = _fidelities(solution.states, direct)

        half_grid = grid.refine(2)
        half_path = adapter.hamiltonian_path(half_grid)
        half_residual = inv.propagate_invariant(half_path, seed).max_residual

        factor = cfg['oracle_refine']
        reference = inv.direct_schrodinger(adapter.hamiltonian_path(grid.refine(factor)), psi0)[::factor]
        direct_half = inv.direct_schrodinger(half_path, psi0)[::2]
        coarse_error = float(np.max(np.linalg.norm(direct - reference, axis=1)))
        half_error = float(np.max(np.linalg.norm(direct_half - reference, axis=1)))

        static = OperatorPath.constant(grid, h_path.samples[0])
        static_frame = inv.track_eigenframe(inv.propagate_invariant(static, h_path.samples[0]))
        static_phases = inv.compute_phases(static_frame, static)
        expected = grid.times[:, None] * static_frame.eigenvalues[None, :]

        metrics = {
            'max_residual': invariant.max_residual,
            'residual_frobenius': float(np.max(inv.invariant_residual(invariant.path, h_path, norm='frobenius'))),
            'residual_half_dt': half_residual,
            'residual_ratio': DataUtils.convergence_ratio(invariant.max_residual, half_residual),
            'spectrum_spread': frame.spectrum_spread,
            'lr_min_fidelity': float(np.min(fidelity)),
            'oracle_min_fidelity': float(np.min(_fidelities(solution.states, reference))),
            'direct_error': coarse_error,
            'direct_ratio': DataUtils.convergence_ratio(coarse_error, half_error),
            'lr_norm_defect': solution.norm_defect,
            'gauge_defect': phases.gauge_defect,
            'static_phase_deviation': float(np.max(np.abs(static_phases.total - expected))),
            'static_geometric_phase': float(np.max(np.abs(static_phases.geometric))),
        }
        tables = {
            'phases.csv': phases.to_frame(),
            'invariant_residuals.csv': pd.DataFrame({'t': grid.times[1:-1], 'residual': invariant.residuals}),
            'fidelity.csv': pd.DataFrame({'t': grid.times, 'fidelity': fidelity}),
        }
        flags = {'residual_within_tolerance': invariant.within_tolerance}
        return metrics, tables, flags

    def _run_reduce(self, cfg: ScenarioConfig) -> Artefacts:
        inv = self.invariants
        grid = TimeGrid.from_span(cfg['t_final'], cfg['dt'])
        adapter = CircularDriveAdapter.from_config(cfg)
        h_path = adapter.hamiltonian_path(grid)
        analytic = adapter.analytic_invariant_path(grid)
        v_path = adapter.frame_path(grid, cfg['frame'])

        propagated = inv.propagate_invariant(h_path, analytic.samples[0])
        frame = inv.track_eigenframe(analytic)
        phases = inv.compute_phases(frame, h_path)
        reduction = inv.unitary_reduce(v_path, analytic, h_path)
        diagonal = inv.check_reduced_diagonal(reduction, phases=phases, frame=frame)

        metrics = {
            'iv_variation': reduction.iv_variation,
            'offdiagonal_defect': diagonal.offdiagonal_defect,
            'phase_mismatch': diagonal.phase_mismatch,
            'hv_hermiticity_defect': reduction.hv_hermiticity_defect,
            'invariant_vs_analytic': max_norm(propagated.path.samples - analytic.samples),
            'analytic_residual': float(np.max(inv.invariant_residual(analytic, h_path))),
        }
        tables = {
            'reduction.csv': diagonal.to_frame(grid),
            'phases.csv': phases.to_frame(),
        }
        flags = {
            'frame': cfg['frame'],
            'iv_time_independent': reduction.iv_variation <= inv.tol.reduction_variation,
        }
        return metrics, tables, flags

    def _susy_pass(self, cfg: ScenarioConfig, grid: SpatialGrid) -> Dict[str, Any]:
        """One full construction on one grid"""
        service = SusyService(stencil_order=cfg['stencil_order'])
        params = PhysParams(cfg['hbar'], cfg['mass'])
        policy = cfg['boundary_policy']
        profile = SuperpotentialAdapter(cfg['superpotential'], cfg['w_scale'])
        w = profile.field(grid)
        v_base = profile.base_potential(cfg['base_potential'], grid, params.c, cfg['base_shift'])

        v_plus, v_minus = service.partner_potentials(w, params)
        a, adag = service.ladder_operators(w, grid, params)
        h_minus, h_plus = service.partner_hamiltonians(a, adag)
        psi0 = service.ground_state_from_w(w, grid, params, policy)
        h = service.base_hamiltonian(v_base, grid, params)
        shift = service.shift_identity_check(v_base, w, grid, params, policy)
        partner = h_plus if shift.matched == 'plus' else h_minus
        invariance = service.invariance_check(h, params, shift.epsilon0 - shift.box_constant, partner)

        return {
            'service': service, 'params': params, 'w': w, 'v_base': v_base,
            'v_plus': v_plus, 'v_minus': v_minus, 'a': a, 'adag': adag,
            'h_minus': h_minus, 'h_plus': h_plus, 'h': h, 'psi0': psi0,
            'shift': shift, 'invariance': invariance,
        }

    def _expected_epsilon0(self, cfg: ScenarioConfig, params: PhysParams, grid: SpatialGrid) -> Optional[float]:
        if cfg['base_potential'] == 'zero':
            return params.kinetic * (np.pi / grid.box_length) ** 2
        if cfg['base_potential'] == 'shifted_partner':
            return cfg['base_shift']
        if cfg['superpotential'] == 'linear':
            return params.c * abs(cfg['w_scale'])
        return None

    def _run_susy(self, cfg: ScenarioConfig) -> Artefacts:
        grid = SpatialGrid(cfg['x_min'], cfg['x_max'], cfg['n_points'])
        run = self._susy_pass(cfg, grid)
        service, params, w = run['service'], run['params'], run['w']
        shift, invariance = run['shift'], run['invariance']
        free = bool(np.all(w.w == 0.0))

        if cfg['boundary_policy'] == 'decay':
            threshold = float(min(run['v_minus'][0], run['v_minus'][-1], run['v_plus'][0], run['v_plus'][-1]))
        else:
            threshold = np.inf
        spectrum = service.pairing_report(run['h_minus'], run['h_plus'], run['a'], cfg['n_pairs'],
                                          threshold, cfg['boundary_policy'])
        spectrum.epsilon0 = shift.epsilon0
        spectrum.eigenvalues_base = lowest_eigenpairs(run['h'], cfg['n_pairs'] + 1)[0]

        fine = self._susy_pass(cfg, grid.refine())
        square = w.w ** 2
        closure = max(
            float(np.max(np.abs(0.5 * (run['v_plus'] + run['v_minus']) - square))),
            float(np.max(np.abs(0.5 * (run['v_plus'] - run['v_minus']) - params.c * w.w_prime))),
        ) / max(1.0, float(np.max(square)), float(np.max(np.abs(params.c * w.w_prime))))

        commutator = service.commutator_defect(run['a'], run['adag'], w.w_prime, params)
        metrics = {
            'partner_closure': closure,
            'annihilation': service.annihilation_defect(run['a'], run['psi0']),
            'adjointness_defect': service.adjointness_defect(run['a'], run['adag']),
            'commutator_defect': commutator,
            'epsilon0': shift.epsilon0,
            'box_constant': shift.box_constant,
            'self_commutator_relative': invariance['self_commutator_relative'],
            'partner_commutator_relative': invariance['partner_commutator_relative'],
            'discretization_defect': invariance['discretization_defect'],
            'continuum_threshold': threshold,
            **spectrum.defects,
        }
        if cfg['superpotential'] in ('zero', 'linear'):
            metrics['commutator_defect_exact'] = commutator

        if not free:
            metrics.update({
                'pair_fraction': spectrum.n_pairs / cfg['n_pairs'],
                'max_pair_deviation': spectrum.max_pair_deviation,
                'shift_matched_deviation': shift.matched_deviation,
                'shift_unmatched_deviation': max(shift.deviation_plus, shift.deviation_minus),
                'shift_ratio': DataUtils.convergence_ratio(shift.matched_deviation,
                                                           fine['shift'].matched_deviation),
                'ground_overlap': shift.ground_overlap,
                'discretization_ratio': DataUtils.convergence_ratio(
                    invariance['discretization_defect'], fine['invariance']['discretization_defect']
                ),
            })
        expected = self._expected_epsilon0(cfg, params, grid)
        if expected is not None:
            metrics['epsilon0_deviation'] = abs(shift.epsilon0 - expected)

        potentials = pd.DataFrame({
            'x': grid.x,
            'W': w.w,
            'W_prime': w.w_prime,
            'V_plus': run['v_plus'],
            'V_minus': run['v_minus'],
            'V_base': run['v_base'],
            'psi0': run['psi0'].samples,
        })
        tables = {
            'spectrum.csv': spectrum.to_frame(),
            'potentials.csv': potentials,
            'base_levels.csv': spectrum.base_frame(),
        }
        flags = {
            'degenerate_free_case': spectrum.degenerate_free_case,
            'matched_partner': shift.matched,
            'pairs_found': spectrum.n_pairs,
        }
        return metrics, tables, flags
