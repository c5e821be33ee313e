"""Field dumps: a one-line JSON manifest followed by little-endian float64 data.

Each array is written row-major with x varying fastest, i.e. as ``values.T``
of the ``(n_x, n_vertical)`` arrays used in memory.
"""
from __future__ import annotations

import json
import os

import numpy as np

FORMAT = "bllab-fields"
VERSION = 1


def write_fields(path, fields: dict, grid=None, meta=None):
    """Write named 2-D arrays (or Fields) to ``path``; returns the path."""
    entries, blobs, offset = [], [], 0
    for name, arr in fields.items():
        kind = getattr(arr, "kind", "interior")
        a = np.asarray(getattr(arr, "values", arr), dtype="<f8")
        if a.ndim != 2:
            raise ValueError(f"field {name!r} must be two-dimensional")
        blob = np.ascontiguousarray(a.T).tobytes()
        vert = "z" if kind == "layer" else "y"
        entries.append({"name": name, "kind": kind, "dims": [vert, "x"],
                        "shape": [a.shape[1], a.shape[0]], "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    manifest = {"format": FORMAT, "version": VERSION, "dtype": "<f8", "order": "row-major, x fastest",
                "fields": entries, "grid": None if grid is None else grid.to_dict(),
                "meta": meta or {}}
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True).encode() + b"\n")
        for blob in blobs:
            fh.write(blob)
    return path


def read_fields(path):
    """Inverse of :func:`write_fields`: ``(manifest, {name: (n_x, n_vertical) array})``."""
    with open(path, "rb") as fh:
        manifest = json.loads(fh.readline())
        data = fh.read()
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{path}: not a field dump")
    out = {}
    for e in manifest["fields"]:
        raw = np.frombuffer(data, dtype="<f8", count=e["nbytes"] // 8, offset=e["offset"])
        out[e["name"]] = raw.reshape(e["shape"]).T.copy()
    return manifest, out


def dump_state(state, directory, tag="state"):
    """Dump the velocity, vorticity and (if present) pressure of a solver state."""
    os.makedirs(directory, exist_ok=True)
    fields = {"u": state.u, "v": state.v, "omega": state.omega}
    if getattr(state, "p", None) is not None:
        fields["p"] = state.p
    meta = {"t": float(state.t)}
    for k in ("epsilon", "gamma", "beta"):
        if hasattr(state, k):
            meta[k] = float(getattr(state, k))
    path = os.path.join(directory, f"{tag}_t{state.t:.6f}.bin")
    return write_fields(path, fields, state.u.grid, meta)
