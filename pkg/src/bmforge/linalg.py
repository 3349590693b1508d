"""Small dense linear-algebra helpers (rank, null spaces, least norm)."""
from __future__ import annotations

import numpy as np


def numerical_rank(M, rel_tol: float) -> int:
    """Number of singular values above ``rel_tol * sigma_max``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def fix_signs(Q):
    """Flip columns of ``Q`` so the first entry above 1e-12 is positive."""
    Q = np.array(Q, dtype=float, copy=True)
    for j in range(Q.shape[1]):
        col = Q[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            Q[:, j] = -col
    return Q


def null_space(M, rel_tol: float):
    """Orthonormal basis (as columns) of ker(M), with deterministic signs.

    Returns ``(basis, rank)``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rows, cols = M.shape
    if rows == 0:
        return np.eye(cols), 0
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    rank = int(np.sum(s > rel_tol * s[0])) if s.size and s[0] > 0 else 0
    return fix_signs(Vt[rank:].T), rank


def orth(M, rel_tol: float):
    """Orthonormal basis of range(M) as columns, deterministic signs."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    rank = int(np.sum(s > rel_tol * s[0])) if s[0] > 0 else 0
    return fix_signs(U[:, :rank])


def orth_complement(M, rel_tol: float):
    """Orthonormal basis of range(M)^perp as columns."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[0]
    if M.shape[1] == 0:
        return np.eye(n)
    U, s, _ = np.linalg.svd(M, full_matrices=True)
    rank = int(np.sum(s > rel_tol * s[0])) if s[0] > 0 else 0
    return fix_signs(U[:, rank:])


def least_norm_solve(M, y, rel_cutoff: float):
    """Least-norm least-squares solution of ``M x = y``.

    Singular values below ``rel_cutoff * sigma_max`` are discarded.
    Returns ``(x, residual_norm, rank)``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    y = np.asarray(y, dtype=float)
    x, _, rank, _ = np.linalg.lstsq(M, y, rcond=rel_cutoff)
    return x, float(np.linalg.norm(M @ x - y)), int(rank)


def sym(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def antisymmetric_basis(p: int):
    """Orthonormal basis of p x p antisymmetric matrices, lexicographic (i<j)."""
    out = []
    for i in range(p):
        for j in range(i + 1, p):
            E = np.zeros((p, p))
            E[i, j] = 1.0 / np.sqrt(2.0)
            E[j, i] = -1.0 / np.sqrt(2.0)
            out.append(E)
    return np.array(out).reshape(len(out), p, p)


def symmetric_basis(r: int):
    """Orthonormal basis of r x r symmetric matrices, lexicographic (i<=j)."""
    out = []
    for i in range(r):
        for j in range(i, r):
            E = np.zeros((r, r))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1.0 / np.sqrt(2.0)
            out.append(E)
    return np.array(out).reshape(len(out), r, r)


def random_orthogonal(p: int, rng):
    Q, R = np.linalg.qr(rng.standard_normal((p, p)))
    return Q * np.sign(np.diag(R))
