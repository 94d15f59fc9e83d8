"""
Scenario configuration: flat JSON objects, one schema per scenario kind.

Every key has a default, so `{"kind": "rabi"}` is a complete config. Unknown
keys are rejected and every error names the key it concerns.
"""

import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from lib.errors import ConfigError
from lib.spatial import FIRST_DIFFERENCE_STENCILS, MAX_POINTS, MIN_POINTS

OUTPUT_DIR_ENV = "LRKIT_OUTPUT_DIR"
MAX_TIME_STEPS = 2_000_000


@dataclass(frozen=True)
class Key:
    kind: type
    default: Any
    choices: Tuple = ()
    positive: bool = False
    minimum: Optional[float] = None
    maximum: Optional[float] = None


TIME_KEYS = {
    't_final': Key(float, 1.0, positive=True),
    'dt': Key(float, 1e-3, positive=True),
}

SCHEMAS: Dict[str, Dict[str, Key]] = {
    'rabi': {
        'omega_a': Key(float, 0.0),
        'omega_b': Key(float, 0.0),
        'coupling': Key(float, 1.0),
        'coupling_shape': Key(str, 'constant', choices=('constant', 'cosine')),
        'drive_frequency': Key(float, 0.0),
        'initial_state': Key(str, 'a', choices=('a', 'b', 'plus')),
        'seed': Key(str, 'sigma_z', choices=('sigma_z', 'sigma_x', 'hamiltonian')),
        't_final': Key(float, 2.0 * math.pi, positive=True),
        'dt': Key(float, 1e-3, positive=True),
        'refine_factor': Key(int, 10, minimum=2, maximum=100),
    },
    'invariant': {
        'level_splitting': Key(float, 1.0),
        'drive_amplitude': Key(float, 0.5),
        'drive_frequency': Key(float, 1.0),
        'seed': Key(str, 'sigma_z', choices=('sigma_z', 'sigma_x', 'hamiltonian')),
        'initial_state': Key(str, 'plus', choices=('a', 'b', 'plus')),
        **TIME_KEYS,
        'oracle_refine': Key(int, 10, minimum=2, maximum=100),
    },
    'reduce': {
        'level_splitting': Key(float, 0.5),
        'drive_amplitude': Key(float, 0.5),
        'drive_frequency': Key(float, 0.5),
        'frame': Key(str, 'rotating', choices=('rotating', 'identity')),
        't_final': Key(float, 2.0, positive=True),
        'dt': Key(float, 5e-4, positive=True),
    },
    'susy': {
        'superpotential': Key(str, 'linear', choices=('zero', 'linear', 'quadratic', 'cubic', 'tanh')),
        'w_scale': Key(float, 1.0),
        'base_potential': Key(str, 'harmonic', choices=('harmonic', 'shifted_partner', 'zero')),
        'base_shift': Key(float, 0.0),
        'x_min': Key(float, -10.0),
        'x_max': Key(float, 10.0),
        'n_points': Key(int, 2001, minimum=MIN_POINTS, maximum=MAX_POINTS),
        'n_pairs': Key(int, 5, minimum=1),
        'hbar': Key(float, 1.0, positive=True),
        'mass': Key(float, 0.5, positive=True),
        'stencil_order': Key(int, 4, choices=tuple(FIRST_DIFFERENCE_STENCILS)),
        'boundary_policy': Key(str, 'decay', choices=('decay', 'box')),
    },
}

KINDS = tuple(SCHEMAS)


@dataclass
class ScenarioConfig:
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    output_dir: str = ""

    def __getitem__(self, key: str) -> Any:
        return self.params[key]

    @property
    def n_steps(self) -> int:
        return int(round(self.params['t_final'] / self.params['dt']))

    def with_output_dir(self, output_dir: str) -> "ScenarioConfig":
        return ScenarioConfig(kind=self.kind, params=dict(self.params), output_dir=str(output_dir))

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, **self.params}


def _coerce(name: str, value: Any, rule: Key, errors: List[str]) -> Any:
    if rule.kind is str:
        if not isinstance(value, str):
            errors.append(f"{name}: expected a string, got {type(value).__name__}")
            return None
    elif rule.kind is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or not math.isfinite(value) or float(value) != int(value):
            errors.append(f"{name}: expected an integer, got {value!r}")
            return None
        value = int(value)
    else:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{name}: expected a number, got {value!r}")
            return None
        value = float(value)
        if not math.isfinite(value):
            errors.append(f"{name}: must be finite, got {value}")
            return None

    if rule.choices and value not in rule.choices:
        errors.append(f"{name}: {value!r} is not one of {list(rule.choices)}")
    if rule.positive and value <= 0:
        errors.append(f"{name}: must be > 0, got {value}")
    if rule.minimum is not None and value < rule.minimum:
        errors.append(f"{name}: must be >= {rule.minimum}, got {value}")
    if rule.maximum is not None and value > rule.maximum:
        errors.append(f"{name}: must be <= {rule.maximum}, got {value}")
    return value


def _cross_checks(kind: str, params: Dict[str, Any], errors: List[str]):
    if 'dt' in params and 't_final' in params and params['dt'] > 0 and params['t_final'] > 0:
        n_steps = int(round(params['t_final'] / params['dt']))
        if not 2 <= n_steps <= MAX_TIME_STEPS:
            errors.append(f"dt: t_final/dt gives {n_steps} steps, allowed range is [2, {MAX_TIME_STEPS}]")
    if kind == 'susy' and params.get('x_max') is not None and params.get('x_min') is not None:
        if params['x_max'] <= params['x_min']:
            errors.append(f"x_max: must exceed x_min ({params['x_min']}), got {params['x_max']}")


def default_output_dir(kind: str) -> str:
    return os.path.join(os.environ.get(OUTPUT_DIR_ENV, "runs"), kind)


def parse_config(text: str) -> ScenarioConfig:
    """Validate JSON config text; raises ConfigError listing every offending key"""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([f"config: invalid JSON ({e.msg} at line {e.lineno}, column {e.colno})"])
    if not isinstance(raw, dict):
        raise ConfigError([f"config: expected a JSON object, got {type(raw).__name__}"])

    kind = raw.get('kind')
    if kind is None:
        raise ConfigError([f"kind: missing, expected one of {list(KINDS)}"])
    if kind not in SCHEMAS:
        raise ConfigError([f"kind: unknown kind {kind!r}, expected one of {list(KINDS)}"])

    schema = SCHEMAS[kind]
    errors: List[str] = []
    params: Dict[str, Any] = {}
    output_dir = raw.get('output_dir', default_output_dir(kind))
    if not isinstance(output_dir, str) or not output_dir:
        errors.append(f"output_dir: expected a non-empty string, got {output_dir!r}")

    for name in sorted(set(raw) - set(schema) - {'kind', 'output_dir'}):
        errors.append(f"{name}: unknown key for kind {kind!r}")

    for name, rule in schema.items():
        value = _coerce(name, raw.get(name, rule.default), rule, errors)
        if value is not None:
            params[name] = value

    _cross_checks(kind, params, errors)
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(kind=kind, params=params, output_dir=output_dir)


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError([f"config: cannot read {path} ({e.strerror})"])
    return parse_config(text)
