"""Stable text and hashes for configs, parameters and datasets.

``canon_json`` is the one serialization used for every JSON artifact IEPG
writes (checkpoint metadata, loss-log headers, reports, manifests), so two
runs with the same config produce the same bytes. ``digest`` hashes any mix
of JSON-like values and numpy arrays.

Rules:
- mapping keys are sorted; dataclasses become their field dicts
- floats round-trip at 17 significant digits and -0.0 is written as 0.0
- NaN and infinities become the strings "NaN", "Infinity", "-Infinity"
- arrays hash as little-endian dtype, shape, then the raw payload
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from typing import Any

import numpy as np


def canon_json(value: Any) -> str:
    """Compact sorted JSON text of a JSON-like value."""
    return json.dumps(
        normalize(value),
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )


def digest(*values: Any) -> str:
    """SHA-256 hex digest over ``values`` in order.

    Arrays contribute their header and payload; anything else contributes
    its ``canon_json`` text.
    """
    h = hashlib.sha256()
    for value in values:
        if isinstance(value, np.ndarray):
            h.update(_array_bytes(value))
        else:
            h.update(canon_json(value).encode("utf-8"))
    return h.hexdigest()


def _array_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    dtype = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    shape = ",".join(str(d) for d in arr.shape)
    return f"{dtype.str}:{shape};".encode("ascii") + arr.astype(dtype).tobytes()


def _float(value: float) -> float | str:
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    rounded = float(f"{value:.17g}")
    return 0.0 if rounded == 0.0 else rounded


def normalize(value: Any) -> Any:
    """Map a value onto plain JSON types."""
    if value is None or isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return _float(float(value))
    if isinstance(value, np.ndarray):
        return normalize(value.tolist())
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return normalize(dataclasses.asdict(value))
    if isinstance(value, dict):
        return {str(k): normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [normalize(v) for v in value]
    return str(value)
