"""Deterministic JSON emission.

Floats are printed with 17 significant digits (enough to round-trip any
double exactly), so equal results serialize to equal bytes.  Non-finite
floats map to null; numpy scalars and arrays are coerced to plain types.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import UsageError

__all__ = ["to_json"]


def _render(obj, indent: int) -> str:
    pad = " " * indent
    inner = " " * (indent + 2)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return "null"
        return f"{v:.17g}"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [_render(v, indent + 2) for v in obj]
        return "[\n" + ",\n".join(inner + s for s in items) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = []
        for k, v in obj.items():
            if not isinstance(k, str):
                raise UsageError("JSON object keys must be strings")
            parts.append(inner + json.dumps(k, ensure_ascii=False) + ": "
                         + _render(v, indent + 2))
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    raise UsageError(f"cannot serialize {type(obj).__name__}")


def to_json(obj) -> str:
    return _render(obj, 0) + "\n"
