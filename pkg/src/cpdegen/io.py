"""File formats: CSV tables and JSON documents for tensors, matrices and results.

CSV floats are written with 17 significant digits; JSON floats use Python's
shortest round-trip representation. Both are lossless for float64. NaN and
infinities are written as ``null`` in JSON.

A tensor file is ``{"dims": [I, J, K], "values": [...]}`` with the values
in first-index-fastest order; matrices are ``{"rows", "cols", "values"}``
in column-major order.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .cp import CpDecomposition
from .exceptions import InvalidArgument
from .tensor import as_tensor3


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidArgument(f"{path}: empty CSV")
    return rows[0], rows[1:]


def to_jsonable(obj):
    """Recursively convert numpy values and non-finite floats for ``json``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, allow_nan=False)
        fh.write("\n")
    return path


def read_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"{path}: malformed JSON ({exc})") from None


def tensor_to_dict(X) -> dict:
    X = as_tensor3(X)
    return {"dims": list(X.shape), "values": X.ravel(order="F").tolist()}


def tensor_from_dict(d) -> np.ndarray:
    try:
        dims = [int(v) for v in d["dims"]]
        values = np.asarray(d["values"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgument(f"not a tensor document: {exc}") from None
    if len(dims) != 3 or values.ndim != 1 or values.size != int(np.prod(dims)):
        raise InvalidArgument(f"tensor document: dims {dims} do not match {values.size} values")
    return as_tensor3(values.reshape(dims, order="F"))


def matrix_to_dict(M) -> dict:
    M = np.asarray(M, dtype=float)
    return {"rows": M.shape[0], "cols": M.shape[1], "values": M.ravel(order="F").tolist()}


def matrix_from_dict(d) -> np.ndarray:
    try:
        rows, cols = int(d["rows"]), int(d["cols"])
        values = np.asarray(d["values"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgument(f"not a matrix document: {exc}") from None
    if values.ndim != 1 or values.size != rows * cols:
        raise InvalidArgument(f"matrix document: {rows}x{cols} does not match {values.size} values")
    return values.reshape((rows, cols), order="F")


def cp_to_dict(cp: CpDecomposition) -> dict:
    return {
        "A": matrix_to_dict(cp.A),
        "B": matrix_to_dict(cp.B),
        "C": matrix_to_dict(cp.C),
        "weights": cp.weights.tolist(),
        "normalized": cp.normalized,
    }


def cp_from_dict(d) -> CpDecomposition:
    try:
        return CpDecomposition(
            matrix_from_dict(d["A"]), matrix_from_dict(d["B"]), matrix_from_dict(d["C"]),
            np.asarray(d["weights"], dtype=float), normalized=bool(d.get("normalized", True)),
        )
    except KeyError as exc:
        raise InvalidArgument(f"not a CP document: missing {exc}") from None


def save_tensor(path, X) -> Path:
    return write_json(path, tensor_to_dict(X))


def load_tensor(path) -> np.ndarray:
    return tensor_from_dict(read_json(path))


def schur_to_dict(schur) -> dict:
    return {
        "R": schur.R,
        "S": matrix_to_dict(schur.S),
        "T": matrix_to_dict(schur.T),
        "U": matrix_to_dict(schur.U),
        "G": tensor_to_dict(schur.G),
        "below_diag_residual": schur.below_diag_residual,
        "reconstruction_error": schur.reconstruction_error,
        "norm_X": schur.norm_X,
        "converged": schur.converged,
        "sweeps": schur.sweeps,
        "reorthonormalized": schur.reorthonormalized,
    }
