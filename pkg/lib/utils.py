import hashlib
import json
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

# below this, both errors in a convergence ratio are roundoff
CONVERGENCE_FLOOR = 1e-13


class DataUtils:
    """Formatting, hashing and convergence helpers shared by the scenarios"""

    @staticmethod
    def format_float(value: float, digits: int = 12) -> str:
        """Fixed-point decimal with `digits` significant digits"""
        if value is None or pd.isna(value):
            return "nan"
        if not np.isfinite(value):
            return "inf" if value > 0 else "-inf"
        text = np.format_float_positional(float(value), precision=digits, unique=False,
                                          fractional=False, trim='-')
        return "0" if text in ("-0", "0") else text

    @staticmethod
    def frame_to_csv(df: pd.DataFrame, digits: int = 12) -> str:
        """CSV text with LF endings and deterministic float formatting"""
        return df.to_csv(index=False, lineterminator="\n",
                         float_format=lambda v: DataUtils.format_float(v, digits))

    @staticmethod
    def sha256_text(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    @staticmethod
    def canonical_json(payload: Dict[str, Any]) -> str:
        return json.dumps(payload, sort_keys=True, indent=2, default=DataUtils._json_default) + "\n"

    @staticmethod
    def _json_default(value: Any) -> Any:
        if isinstance(value, (np.floating, np.integer)):
            return value.item()
        if isinstance(value, np.bool_):
            return bool(value)
        if isinstance(value, np.ndarray):
            return value.tolist()
        raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")

    @staticmethod
    def convergence_ratio(coarse_error: float, fine_error: float) -> Optional[float]:
        """
        coarse/fine error ratio under one refinement. None when both errors
        already sit at roundoff and no order can be observed.
        """
        if coarse_error <= CONVERGENCE_FLOOR and fine_error <= CONVERGENCE_FLOOR:
            return None
        if fine_error <= 0.0:
            return float('inf')
        return float(coarse_error / fine_error)

    @staticmethod
    def clean_metric(value: Any) -> Any:
        """Plain Python scalars for the JSON report; non-finite floats become strings"""
        if isinstance(value, (np.floating, float)):
            value = float(value)
            if not np.isfinite(value):
                return str(value)
            return value
        if isinstance(value, (np.integer,)):
            return int(value)
        if isinstance(value, np.bool_):
            return bool(value)
        return value
