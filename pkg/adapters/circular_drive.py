import numpy as np

from lib.errors import ValidationError
from lib.operators import SIGMA_X, SIGMA_Y, SIGMA_Z, OperatorPath, TimeGrid


class CircularDriveAdapter:
    """
    Two-level system under a circularly polarised drive,
    H(t) = (D/2) sz + (W/2)(cos(v t) sx + sin(v t) sy).

    V(t) = exp(-i v t sz / 2) removes the time dependence exactly, leaving
    H_eff = ((D - v)/2) sz + (W/2) sx, so V H_eff V† is an invariant.
    """

    FRAMES = ('rotating', 'identity')

    def __init__(self, level_splitting: float, drive_amplitude: float, drive_frequency: float):
        self.level_splitting = level_splitting
        self.drive_amplitude = drive_amplitude
        self.drive_frequency = drive_frequency

    @classmethod
    def from_config(cls, cfg) -> "CircularDriveAdapter":
        return cls(cfg['level_splitting'], cfg['drive_amplitude'], cfg['drive_frequency'])

    def hamiltonian(self, t: float) -> np.ndarray:
        nu_t = self.drive_frequency * t
        return (0.5 * self.level_splitting * SIGMA_Z
                + 0.5 * self.drive_amplitude * (np.cos(nu_t) * SIGMA_X + np.sin(nu_t) * SIGMA_Y))

    def hamiltonian_path(self, grid: TimeGrid) -> OperatorPath:
        return OperatorPath.from_function(grid, self.hamiltonian)

    def rotating_frame(self, t: float) -> np.ndarray:
        half = 0.5 * self.drive_frequency * t
        return np.diag([np.exp(-1j * half), np.exp(1j * half)])

    def frame_path(self, grid: TimeGrid, frame: str = 'rotating') -> OperatorPath:
        if frame not in self.FRAMES:
            raise ValidationError(f"Unknown frame '{frame}', expected one of {self.FRAMES}")
        if frame == 'identity':
            return OperatorPath.constant(grid, np.eye(2, dtype=complex))
        return OperatorPath.from_function(grid, self.rotating_frame)

    @property
    def effective_hamiltonian(self) -> np.ndarray:
        return (0.5 * (self.level_splitting - self.drive_frequency) * SIGMA_Z
                + 0.5 * self.drive_amplitude * SIGMA_X)

    def analytic_invariant(self, t: float) -> np.ndarray:
        v = self.rotating_frame(t)
        return v @ self.effective_hamiltonian @ v.conj().T

    def analytic_invariant_path(self, grid: TimeGrid) -> OperatorPath:
        return OperatorPath.from_function(grid, self.analytic_invariant)
