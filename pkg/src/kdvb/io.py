"""Deterministic artifact I/O: CSV tables, JSON summaries, binary snapshots.

CSV dialect: comma separator, period decimal, LF line endings, one header
row, UTF-8.  Floats are rendered with repr-faithful %.17g so identical data
produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(x) for x in row))
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path


def read_csv(path):
    """Returns (header, columns dict of float arrays)."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if data.size == 0:
        data = np.zeros((0, len(header)))
    return header, {name: data[:, i] for i, name in enumerate(header)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True)
                    + "\n", encoding="utf-8")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_snapshot(path, coeffs: np.ndarray) -> Path:
    """Flat binary state cloud: 8-byte little-endian n_points, then the
    complex128 coefficients (leading axes flattened, C order)."""
    path = Path(path)
    arr = np.ascontiguousarray(coeffs, dtype=np.complex128)
    n = arr.shape[-1]
    with open(path, "wb") as fh:
        fh.write(int(n).to_bytes(8, "little"))
        fh.write(arr.reshape(-1, n).tobytes())
    return path


def read_snapshot(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    n = int.from_bytes(raw[:8], "little")
    flat = np.frombuffer(raw[8:], dtype=np.complex128)
    if n < 1 or flat.size % n:
        raise ValueError("corrupt snapshot: size does not divide n_points")
    return flat.reshape(-1, n)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
