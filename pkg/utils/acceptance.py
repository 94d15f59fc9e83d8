import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# check name -> (metric key, threshold, comparison); 'max' means value <= threshold
Rule = Tuple[str, float, str]


class AcceptanceManager:
    """Turns scenario metrics into pass/fail checks against fixed thresholds"""

    def __init__(self):
        self.rules: Dict[str, Dict[str, Rule]] = {
            'rabi': {
                'closed_form_deviation': ('closed_form_deviation', 1e-6, 'max'),
                'refinement_deviation': ('refinement_deviation', 1e-6, 'max'),
                'trace_drift': ('trace_drift', 1e-10, 'max'),
                'hermiticity_drift': ('hermiticity_drift', 1e-10, 'max'),
                'purity_drift': ('purity_drift', 1e-8, 'max'),
                'component_vs_matrix': ('component_vs_matrix', 1e-10, 'max'),
                'density_vs_schrodinger': ('density_vs_schrodinger', 1e-7, 'max'),
                'density_vs_lr': ('density_vs_lr', 1e-7, 'max'),
                'lr_fidelity': ('lr_min_fidelity', 1.0 - 1e-8, 'min'),
            },
            'invariant': {
                'invariant_residual': ('max_residual', 1e-6, 'max'),
                'residual_order': ('residual_ratio', 3.5, 'min'),
                'spectrum_spread': ('spectrum_spread', 1e-10, 'max'),
                'lr_fidelity': ('lr_min_fidelity', 1.0 - 1e-8, 'min'),
                'oracle_fidelity': ('oracle_min_fidelity', 1.0 - 1e-8, 'min'),
                'direct_order': ('direct_ratio', 3.5, 'min'),
                'lr_norm_defect': ('lr_norm_defect', 1e-10, 'max'),
                'static_phase_deviation': ('static_phase_deviation', 1e-10, 'max'),
                'static_geometric_phase': ('static_geometric_phase', 1e-10, 'max'),
            },
            'reduce': {
                'iv_variation': ('iv_variation', 1e-8, 'max'),
                'offdiagonal_defect': ('offdiagonal_defect', 1e-8, 'max'),
                'phase_mismatch': ('phase_mismatch', 1e-6, 'max'),
                'invariant_vs_analytic': ('invariant_vs_analytic', 1e-6, 'max'),
            },
            'susy': {
                'partner_closure': ('partner_closure', 1e-15, 'max'),
                'annihilation': ('annihilation', 1e-6, 'max'),
                'pair_count': ('pair_fraction', 1.0, 'min'),
                'pairing_deviation': ('max_pair_deviation', 1e-3, 'max'),
                'epsilon0_deviation': ('epsilon0_deviation', 1e-4, 'max'),
                'shift_identity': ('shift_matched_deviation', 1e-4, 'max'),
                'shift_identity_unique': ('shift_unmatched_deviation', 1e-4, 'min'),
                'shift_identity_order': ('shift_ratio', 3.5, 'min'),
                'self_commutator': ('self_commutator_relative', 1e-12, 'max'),
                'discretization_order': ('discretization_ratio', 3.5, 'min'),
                'commutator_defect': ('commutator_defect_exact', 1e-8, 'max'),
                'intertwining': ('intertwining', 1e-6, 'max'),
            },
        }

    def evaluate(self, kind: str, metrics: Dict[str, Any],
                 overrides: Optional[Dict[str, float]] = None) -> Dict[str, Any]:
        """
        Checks whose metric is absent are not applicable for this run and
        are left out. A None convergence ratio means both errors sit at
        roundoff and counts as a pass.
        """
        if kind not in self.rules:
            raise KeyError(f"No acceptance rules for kind '{kind}'")
        overrides = overrides or {}
        checks: Dict[str, Dict[str, Any]] = {}
        failures: List[str] = []

        for name, (metric, threshold, comparison) in self.rules[kind].items():
            if metric not in metrics:
                continue
            threshold = overrides.get(name, threshold)
            value = metrics[metric]
            passed = self._passes(value, threshold, comparison, metric)
            checks[name] = {'value': value, 'threshold': threshold, 'pass': passed}
            if not passed:
                failures.append(name)
                logger.warning(f"Check {name} failed: {value} vs {comparison} {threshold}")

        return {'checks': checks, 'failures': failures, 'passed': not failures}

    def _passes(self, value: Any, threshold: float, comparison: str, metric: str) -> bool:
        if value is None:
            return metric.endswith('_ratio')
        if isinstance(value, float) and not np.isfinite(value):
            return comparison == 'min' and value > 0
        if comparison == 'max':
            return value <= threshold
        return value >= threshold

    def format_check(self, name: str, check: Dict[str, Any]) -> str:
        marker = "✅" if check['pass'] else "❌"
        value = check['value']
        shown = "n/a" if value is None else (f"{value:.3e}" if isinstance(value, float) else str(value))
        return f"{marker} {name}: {shown} (threshold {check['threshold']:.3e})"
