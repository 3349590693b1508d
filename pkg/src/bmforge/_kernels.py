"""Inner loops shared by the geometry and optimizer code.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with identical semantics. The numba path is used when numba is
importable and ``BMFORGE_DISABLE_NUMBA`` is unset (or ``0``); set it to
``1`` to force the numpy path. Both implementations stay importable as
``numba_impl`` / ``numpy_impl`` so the test-suite can compare them.

Flattening convention: an ``n x p`` matrix ``M`` is vectorised row-major,
``vec(M)[i * p + a] = M[i, a]``.
"""
from __future__ import annotations

import os
import types

import numpy as np

DISABLE_ENV = "BMFORGE_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


# --- pure numpy ------------------------------------------------------------

def _np_apply_A(A, X):
    return np.einsum("kij,ij->k", A, X)


def _np_adjoint(A, g):
    return np.einsum("k,kij->ij", g, A)


def _np_jacobian(A, V):
    # row k is vec(2 A_k V): d/dV <A_k, V V^T> applied to dV is 2 <A_k V, dV>
    m = A.shape[0]
    return 2.0 * np.einsum("kij,ja->kia", A, V).reshape(m, -1)


def _np_hessian_form(C2, B):
    CB = np.einsum("ij,kja->kia", C2, B)
    H = 2.0 * np.einsum("kia,lia->kl", CB, B)
    return 0.5 * (H + H.T)


def _np_row_normalize(W):
    return W / np.linalg.norm(W, axis=1, keepdims=True)


def _np_block_normalize(W, offsets):
    out = np.empty_like(W)
    for s in range(len(offsets) - 1):
        lo, hi = offsets[s], offsets[s + 1]
        out[lo:hi] = W[lo:hi] / np.linalg.norm(W[lo:hi])
    return out


# --- numba -----------------------------------------------------------------

def _nb_apply_A(A, X):
    m, n = A.shape[0], A.shape[1]
    out = np.zeros(m)
    for k in range(m):
        s = 0.0
        for i in range(n):
            for j in range(n):
                s += A[k, i, j] * X[i, j]
        out[k] = s
    return out


def _nb_adjoint(A, g):
    m, n = A.shape[0], A.shape[1]
    out = np.zeros((n, n))
    for k in range(m):
        gk = g[k]
        if gk == 0.0:
            continue
        for i in range(n):
            for j in range(n):
                out[i, j] += gk * A[k, i, j]
    return out


def _nb_jacobian(A, V):
    m, n = A.shape[0], A.shape[1]
    p = V.shape[1]
    J = np.zeros((m, n * p))
    for k in range(m):
        for i in range(n):
            for j in range(n):
                a_kij = A[k, i, j]
                if a_kij == 0.0:
                    continue
                for a in range(p):
                    J[k, i * p + a] += 2.0 * a_kij * V[j, a]
    return J


def _nb_hessian_form(C2, B):
    K, n, p = B.shape
    CB = np.zeros((K, n, p))
    for k in range(K):
        for i in range(n):
            for j in range(n):
                c = C2[i, j]
                if c == 0.0:
                    continue
                for a in range(p):
                    CB[k, i, a] += c * B[k, j, a]
    H = np.zeros((K, K))
    for k in range(K):
        for l in range(k, K):
            s = 0.0
            for i in range(n):
                for a in range(p):
                    s += CB[k, i, a] * B[l, i, a] + CB[l, i, a] * B[k, i, a]
            H[k, l] = s
            H[l, k] = s
    return H


def _nb_row_normalize(W):
    n, p = W.shape
    out = np.empty((n, p))
    for i in range(n):
        s = 0.0
        for a in range(p):
            s += W[i, a] * W[i, a]
        s = np.sqrt(s)
        for a in range(p):
            out[i, a] = W[i, a] / s
    return out


def _nb_block_normalize(W, offsets):
    n, p = W.shape
    out = np.empty((n, p))
    for s in range(offsets.shape[0] - 1):
        lo, hi = offsets[s], offsets[s + 1]
        acc = 0.0
        for i in range(lo, hi):
            for a in range(p):
                acc += W[i, a] * W[i, a]
        acc = np.sqrt(acc)
        for i in range(lo, hi):
            for a in range(p):
                out[i, a] = W[i, a] / acc
    return out


_NAMES = ("apply_A", "adjoint", "jacobian", "hessian_form",
          "row_normalize", "block_normalize")

numpy_impl = types.SimpleNamespace(
    **{name: globals()["_np_" + name] for name in _NAMES})

if HAVE_NUMBA:
    numba_impl = types.SimpleNamespace(
        **{name: numba.njit(cache=True, nogil=True)(globals()["_nb_" + name])
           for name in _NAMES})
else:  # pragma: no cover
    numba_impl = None


def numba_enabled() -> bool:
    flag = os.environ.get(DISABLE_ENV, "0").strip().lower()
    return HAVE_NUMBA and flag in ("", "0", "false", "no")


def backend_name() -> str:
    return "numba" if numba_enabled() else "numpy"


def _active():
    return numba_impl if numba_enabled() else numpy_impl


# Dispatch happens per call so the flag can be flipped at runtime (tests,
# benchmark). Arrays are made contiguous float64 for numba's sake.

def apply_A(A, X):
    return _active().apply_A(np.ascontiguousarray(A, dtype=float),
                             np.ascontiguousarray(X, dtype=float))


def adjoint(A, g):
    return _active().adjoint(np.ascontiguousarray(A, dtype=float),
                             np.ascontiguousarray(g, dtype=float))


def jacobian(A, V):
    return _active().jacobian(np.ascontiguousarray(A, dtype=float),
                              np.ascontiguousarray(V, dtype=float))


def hessian_form(C2, B):
    return _active().hessian_form(np.ascontiguousarray(C2, dtype=float),
                                  np.ascontiguousarray(B, dtype=float))


def row_normalize(W):
    return _active().row_normalize(np.ascontiguousarray(W, dtype=float))


def block_normalize(W, offsets):
    return _active().block_normalize(np.ascontiguousarray(W, dtype=float),
                                     np.asarray(offsets, dtype=np.int64))
