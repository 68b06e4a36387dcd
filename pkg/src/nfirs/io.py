"""On-disk formats for channel matrices, moment fixtures and run outputs.

Complex matrices are written either as CSV rows ``i,n,re,im`` or as a raw
binary stream of little-endian float64 values, interleaved ``re, im`` in
row-major order. The binary stream carries no header; the shape travels
separately (for moment fixtures it is stored in ``meta.json``).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

_LE_F64 = np.dtype("<f8")


def write_complex_csv(path, matrix: np.ndarray) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["i", "n", "re", "im"])
        for i, row in enumerate(matrix):
            for n, value in enumerate(row):
                writer.writerow([i, n, repr(float(value.real)), repr(float(value.imag))])


def read_complex_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    rows_i = [int(r["i"]) for r in rows]
    cols_n = [int(r["n"]) for r in rows]
    out = np.zeros((max(rows_i) + 1, max(cols_n) + 1), dtype=complex)
    for r, i, n in zip(rows, rows_i, cols_n):
        out[i, n] = float(r["re"]) + 1j * float(r["im"])
    return out


def to_interleaved_bytes(array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(np.asarray(array, dtype=np.complex128))
    inter = np.empty(array.shape + (2,), dtype=_LE_F64)
    inter[..., 0] = array.real
    inter[..., 1] = array.imag
    return inter.tobytes(order="C")


def from_interleaved_bytes(data: bytes, shape) -> np.ndarray:
    flat = np.frombuffer(data, dtype=_LE_F64)
    expected = 2 * int(np.prod(shape))
    if flat.size != expected:
        raise ValueError(f"expected {expected} float64 values, got {flat.size}")
    pairs = flat.reshape(tuple(shape) + (2,))
    return pairs[..., 0] + 1j * pairs[..., 1]


def write_complex_binary(path, array: np.ndarray) -> None:
    Path(path).write_bytes(to_interleaved_bytes(array))


def read_complex_binary(path, shape) -> np.ndarray:
    return from_interleaved_bytes(Path(path).read_bytes(), shape)


def write_series_csv(path, header, columns) -> None:
    """Write equal-length columns under ``header``; floats use ``repr``."""
    columns = [list(c) for c in columns]
    if len({len(c) for c in columns}) > 1:
        raise ValueError("columns must have equal length")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([_fmt(v) for v in row])


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
