"""
Exception types raised by the toolkit
"""

from typing import Any, Dict, List, Optional


class ToolkitError(Exception):
    """Base class for all toolkit failures"""


class ValidationError(ToolkitError):
    """Input does not satisfy an operation's precondition"""


class ConfigError(ToolkitError):
    """Scenario configuration failed validation"""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class DegeneracyError(ToolkitError):
    """Invariant spectrum is not resolvable at some time step"""

    def __init__(self, step: int, gap: float, threshold: float):
        self.step = step
        self.gap = gap
        super().__init__(
            f"Degenerate invariant spectrum at step {step}: "
            f"min eigenvalue gap {gap:.3e} below {threshold:.3e}"
        )


class StepSizeError(ToolkitError):
    """Consecutive eigenframes overlap too weakly to match modes"""

    def __init__(self, step: int, overlap: float):
        self.step = step
        self.overlap = overlap
        super().__init__(
            f"Mode matching failed at step {step}: best squared overlap {overlap:.3f} < 0.5, "
            f"reduce dt"
        )


class GaugeError(ToolkitError):
    """Geometric phase integrand left the real axis"""


class NormalizationError(ToolkitError):
    """Ground state built from the superpotential does not decay at the walls"""


class GuardBreachError(ToolkitError):
    """Density-matrix guard exceeded a hard limit during integration"""

    def __init__(self, step: int, reason: str, metrics: Optional[Dict[str, Any]] = None):
        self.step = step
        self.reason = reason
        self.metrics = dict(metrics or {})
        details = ", ".join(f"{k}={v:.3e}" for k, v in self.metrics.items())
        super().__init__(f"Guard breach at step {step}: {reason} ({details})")


class OutputError(ToolkitError):
    """Run artefacts could not be written"""

    def __init__(self, path: str, reason: str):
        self.path = path
        super().__init__(f"Cannot write {path}: {reason}")
