"""Versioned checkpoint container for named parameter tensors.

Format: a numpy .npz archive with one entry per tensor plus a reserved
``__meta__`` entry holding a JSON header (format version, tensor shape
registry, caller metadata). Shapes are validated against the header on
load, so a truncated or mismatched file fails loudly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_META_KEY = "__meta__"


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None):
    path = Path(path)
    header = {
        "format_version": FORMAT_VERSION,
        "shapes": {name: list(np.asarray(v).shape) for name, v in tensors.items()},
        "meta": meta or {},
    }
    payload = {name: np.asarray(v, dtype=np.float64) for name, v in tensors.items()}
    if _META_KEY in payload:
        raise ValueError(f"{_META_KEY!r} is a reserved tensor name")
    payload[_META_KEY] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Returns (tensors, meta); raises on version or shape mismatch."""
    with np.load(path) as archive:
        if _META_KEY not in archive:
            raise ValueError(f"{path}: not a checkpoint file (missing header)")
        header = json.loads(bytes(archive[_META_KEY]).decode())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(
                f"{path}: unsupported checkpoint version {header.get('format_version')}, "
                f"expected {FORMAT_VERSION}")
        tensors = {}
        for name, shape in header["shapes"].items():
            value = archive[name]
            if list(value.shape) != shape:
                raise ValueError(f"{path}: tensor {name!r} has shape {value.shape}, "
                                 f"header says {shape}")
            tensors[name] = value
    return tensors, header["meta"]
