import logging
from typing import Callable, Dict, Tuple

import numpy as np

from lib.errors import ValidationError
from lib.spatial import SpatialGrid, SuperpotentialField

logger = logging.getLogger(__name__)

Profile = Callable[[np.ndarray, float], Tuple[np.ndarray, np.ndarray]]


class SuperpotentialAdapter:
    """Catalogue of superpotentials W(x) with analytic W'(x)"""

    PROFILES: Dict[str, Profile] = {
        'zero': lambda x, s: (np.zeros_like(x), np.zeros_like(x)),
        'linear': lambda x, s: (s * x, np.full_like(x, s)),
        'quadratic': lambda x, s: (s * x ** 2, 2.0 * s * x),
        'cubic': lambda x, s: (s * x ** 3, 3.0 * s * x ** 2),
        'tanh': lambda x, s: (s * np.tanh(x), s / np.cosh(x) ** 2),
    }

    def __init__(self, name: str, scale: float = 1.0):
        if name not in self.PROFILES:
            raise ValidationError(f"Unknown superpotential '{name}', expected one of {sorted(self.PROFILES)}")
        self.name = name
        self.scale = float(scale)

    def field(self, grid: SpatialGrid) -> SuperpotentialField:
        w, w_prime = self.PROFILES[self.name](grid.x, self.scale)
        return SuperpotentialField(grid=grid, w=w, w_prime=w_prime)

    def harmonic_base(self, grid: SpatialGrid) -> np.ndarray:
        """V = (s x)^2, the oscillator whose ground state the linear profile generates"""
        if self.name != 'linear':
            logger.warning(f"Harmonic base potential paired with '{self.name}' superpotential")
        return (self.scale * grid.x) ** 2

    def shifted_partner_base(self, grid: SpatialGrid, c: float, shift: float) -> np.ndarray:
        """V = W^2 - c W' + shift, built so the lowest level is exactly `shift`"""
        field = self.field(grid)
        return field.w ** 2 - c * field.w_prime + shift

    def base_potential(self, kind: str, grid: SpatialGrid, c: float, shift: float = 0.0) -> np.ndarray:
        if kind == 'zero':
            return np.zeros(grid.n_points)
        if kind == 'harmonic':
            return self.harmonic_base(grid)
        if kind == 'shifted_partner':
            return self.shifted_partner_base(grid, c, shift)
        raise ValidationError(f"Unknown base potential '{kind}', expected zero, harmonic or shifted_partner")
