"""JSON encoding of instances, pairs, certificates and run metadata.

Constraint matrices are stored by their lower triangle in row-major order
(``numpy.tril_indices``). Floats use Python's shortest round-trip repr, so
identical inputs give byte-identical files.
"""
from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .certifier import GroundTruth, ground_truth
from .sdp import SdpInstance
from .tolerances import Tolerances


class InputError(ValueError):
    """Malformed input file; carries the path and offending field."""

    def __init__(self, path, field, message):
        super().__init__(f"{path}: field {field!r}: {message}")
        self.path = str(path)
        self.field = field


def to_jsonable(obj):
    """Recursively convert dataclasses and arrays; fields tagged
    ``metadata={"json": False}`` are skipped."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {}
        for f in dataclasses.fields(obj):
            if f.metadata.get("json", True):
                out[f.name] = to_jsonable(getattr(obj, f.name))
        return out
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(path, "<file>", exc.strerror or str(exc)) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(path, "<json>", f"line {exc.lineno}: {exc.msg}") from None


def metadata(seed=None, tol: Tolerances | None = None, command=None) -> dict:
    return {
        "version": __version__,
        "seed": seed,
        "tolerances": tol.as_dict() if tol is not None else None,
        "command": command,
        "backend": _kernels.backend_name(),
    }


# --- instances and pairs ------------------------------------------------------------

def instance_to_dict(instance: SdpInstance, C=None) -> dict:
    n = instance.n
    il = np.tril_indices(n)
    out = {
        "n": n,
        "m": instance.m,
        "A": [instance.A[k][il] for k in range(instance.m)],
        "b": instance.b,
        "family": instance.family,
        "blocks": list(instance.blocks) if instance.blocks is not None else None,
        "structure": instance.structure,
    }
    if C is not None:
        out["C"] = np.asarray(C)
    return to_jsonable(out)


def _field(data, key, path, required=True):
    if key not in data or data[key] is None:
        if required:
            raise InputError(path, key, "missing")
        return None
    return data[key]


def _array(data, key, path, ndim=None, required=True):
    raw = _field(data, key, path, required)
    if raw is None:
        return None
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        raise InputError(path, key, "not a numeric array") from None
    if ndim is not None and arr.ndim != ndim:
        raise InputError(path, key, f"expected {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(path, key, "non-finite entries")
    return arr


def instance_from_dict(data, path="<instance>"):
    """Return ``(SdpInstance, C or None)``."""
    if not isinstance(data, dict):
        raise InputError(path, "<root>", "expected a JSON object")
    n = _field(data, "n", path)
    if not isinstance(n, int) or n < 1:
        raise InputError(path, "n", "must be a positive integer")
    tri = _array(data, "A", path, ndim=2)
    il = np.tril_indices(n)
    if tri.shape[1] != il[0].size:
        raise InputError(path, "A", f"each entry needs n(n+1)/2 = {il[0].size} values")
    m = tri.shape[0]
    if "m" in data and data["m"] != m:
        raise InputError(path, "m", f"says {data['m']} but A has {m} matrices")
    A = np.zeros((m, n, n))
    for k in range(m):
        A[k][il] = tri[k]
        A[k] = A[k] + np.tril(A[k], -1).T
    b = _array(data, "b", path, ndim=1)
    blocks = data.get("blocks")
    try:
        inst = SdpInstance.from_matrices(A, b, family=data.get("family"), blocks=blocks,
                                         structure=data.get("structure"))
    except ValueError as exc:
        raise InputError(path, "A", str(exc)) from None
    C = _array(data, "C", path, ndim=2, required=False)
    if C is not None and C.shape != (n, n):
        raise InputError(path, "C", f"expected shape ({n}, {n}), got {C.shape}")
    return inst, C


def pair_to_dict(truth: GroundTruth, V) -> dict:
    V = np.asarray(V)
    return to_jsonable({"U0": truth.U0, "V": V, "r": truth.r, "p": V.shape[1]})


def pair_from_dict(data, instance: SdpInstance, path="<pair>", tol=None):
    """Return ``(GroundTruth, V)``."""
    if not isinstance(data, dict):
        raise InputError(path, "<root>", "expected a JSON object")
    U0 = _array(data, "U0", path, ndim=2)
    V = _array(data, "V", path, ndim=2)
    for key, arr in (("U0", U0), ("V", V)):
        if arr.shape[0] != instance.n:
            raise InputError(path, key, f"has {arr.shape[0]} rows, expected {instance.n}")
    return ground_truth(instance, U0, tol=tol), V


def cost_from_dict(data, n, path="<cost>"):
    """Return ``(C, g1 or None)`` from a file holding ``"C"`` (and ``"g1"``)."""
    if not isinstance(data, dict):
        raise InputError(path, "<root>", "expected a JSON object")
    C = _array(data, "C", path, ndim=2)
    if C.shape != (n, n):
        raise InputError(path, "C", f"expected shape ({n}, {n}), got {C.shape}")
    g1 = _array(data, "g1", path, ndim=1, required=False)
    return C, g1
