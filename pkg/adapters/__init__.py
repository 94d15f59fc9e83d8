"""
Scenario adapters: Hamiltonians, drives and superpotentials
"""

from .circular_drive import CircularDriveAdapter
from .rabi import RabiAdapter, initial_state, seed_operator
from .superpotentials import SuperpotentialAdapter

__all__ = [
    'CircularDriveAdapter',
    'RabiAdapter',
    'SuperpotentialAdapter',
    'initial_state',
    'seed_operator',
]
