import logging
from typing import Optional

import numpy as np

from lib.errors import ValidationError
from lib.operators import SIGMA_X, SIGMA_Z, TimeGrid
from services.density_service import TwoLevelParams

logger = logging.getLogger(__name__)

INITIAL_STATES = {
    'a': np.array([1.0, 0.0], dtype=complex),
    'b': np.array([0.0, 1.0], dtype=complex),
    'plus': np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0),
}


def initial_state(name: str) -> np.ndarray:
    if name not in INITIAL_STATES:
        raise ValidationError(f"Unknown initial state '{name}', expected one of {sorted(INITIAL_STATES)}")
    return INITIAL_STATES[name].copy()


def seed_operator(name: str, hamiltonian_t0: Optional[np.ndarray] = None) -> np.ndarray:
    """Hermitian seed I(t0) for invariant propagation"""
    if name == 'sigma_z':
        return SIGMA_Z.copy()
    if name == 'sigma_x':
        return SIGMA_X.copy()
    if name == 'hamiltonian':
        if hamiltonian_t0 is None:
            raise ValidationError("Seed 'hamiltonian' needs H(t0)")
        return np.array(hamiltonian_t0, dtype=complex)
    raise ValidationError(f"Unknown seed '{name}', expected sigma_z, sigma_x or hamiltonian")


class RabiAdapter:
    """Two-level atom with constant or cosine-modulated coupling"""

    SHAPES = ('constant', 'cosine')

    def __init__(self, omega_a: float = 0.0, omega_b: float = 0.0, coupling: float = 1.0,
                 shape: str = 'constant', drive_frequency: float = 0.0):
        if shape not in self.SHAPES:
            raise ValidationError(f"Unknown coupling shape '{shape}', expected one of {self.SHAPES}")
        self.omega_a = omega_a
        self.omega_b = omega_b
        self.coupling = coupling
        self.shape = shape
        self.drive_frequency = drive_frequency

    @classmethod
    def from_config(cls, cfg) -> "RabiAdapter":
        return cls(cfg['omega_a'], cfg['omega_b'], cfg['coupling'], cfg['coupling_shape'],
                   cfg['drive_frequency'])

    @property
    def has_closed_form(self) -> bool:
        return self.shape == 'constant' or self.drive_frequency == 0.0

    def coupling_samples(self, grid: TimeGrid) -> np.ndarray:
        if self.shape == 'constant':
            return np.full(grid.n_steps + 1, self.coupling, dtype=complex)
        return (self.coupling * np.cos(self.drive_frequency * grid.times)).astype(complex)

    def params(self, grid: TimeGrid) -> TwoLevelParams:
        return TwoLevelParams(grid=grid, omega_a=self.omega_a, omega_b=self.omega_b,
                              coupling=self.coupling_samples(grid))
