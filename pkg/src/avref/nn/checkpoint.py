"""Model checkpoint container.

A checkpoint is an .npz archive of named float64 tensors plus one JSON
metadata entry carrying a format-version field and model configuration.
Round-trips are bit-exact (same bytes in every tensor).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, MissingArtifactError

FORMAT_VERSION = 1
_META_KEY = "__meta__"


def save_checkpoint(path, arrays: dict, meta: dict | None = None) -> None:
    meta = dict(meta or {})
    meta["format_version"] = FORMAT_VERSION
    meta["tensors"] = {name: list(a.shape) for name, a in arrays.items()}
    payload = {name: np.ascontiguousarray(a) for name, a in arrays.items()}
    payload[_META_KEY] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path):
    """Returns (arrays, meta); validates the format version and shapes."""
    p = Path(path)
    if not p.exists():
        raise MissingArtifactError(f"checkpoint not found: {p}")
    with np.load(p) as z:
        if _META_KEY not in z:
            raise ConfigurationError(f"not a checkpoint file: {p}")
        meta = json.loads(bytes(z[_META_KEY].tobytes()).decode("utf-8"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ConfigurationError(
                f"unsupported checkpoint version {meta.get('format_version')}"
            )
        arrays = {name: z[name] for name in z.files if name != _META_KEY}
    for name, shape in meta.get("tensors", {}).items():
        if name not in arrays or list(arrays[name].shape) != shape:
            raise ConfigurationError(f"tensor '{name}' missing or misshaped")
    return arrays, meta
