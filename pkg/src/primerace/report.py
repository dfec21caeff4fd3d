"""Deterministic report serialization."""
from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError

FORMATS = ("json", "csv")
SIG = 12


def _float(x: float):
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.{SIG}g}")


def normalize(obj):
    """JSON-ready copy: floats at 12 significant digits, tuples as lists, numpy unwrapped."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, complex):
        return [_float(obj.real), _float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return normalize(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return normalize(obj.to_dict())
    if dataclasses.is_dataclass(obj):
        return normalize(dataclasses.asdict(obj))
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def dumps(results) -> str:
    return json.dumps(normalize(results), sort_keys=True, indent=2) + "\n"


def write_report(results, fmt: str = "json", path=None) -> str:
    """Render ``results`` and write them to ``path`` (stdout when ``None`` is handled by the caller).

    ``csv`` is for trajectories only (objects with ``to_csv``).
    """
    if fmt not in FORMATS:
        raise ConfigError(f"unknown output format {fmt!r}; choose from {', '.join(FORMATS)}")
    if fmt == "csv":
        if not hasattr(results, "to_csv"):
            raise ConfigError("csv output is only available for race trajectories")
        if path is None:
            raise ConfigError("csv output needs a path")
        try:
            results.to_csv(path)
        except OSError as e:
            raise OSError(f"cannot write {path}: {e.strerror}") from e
        return Path(path).read_text()
    text = dumps(results)
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as e:
            raise OSError(f"cannot write {path}: {e.strerror}") from e
    return text
