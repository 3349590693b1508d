"""Concrete problem families and their (X0, V) pairs.

MaxCut, Orthogonal-Cut and product-of-spheres constraint systems, the
explicit factor points for which the minimally-secant condition holds, and
two hard-coded fixtures: the rank-2 example with a spurious point below the
dimension threshold, and the constraint system for which no minimally-secant
pair exists.
"""
from __future__ import annotations

import dataclasses
import itertools
from typing import Optional

import numpy as np

from .certifier import GroundTruth, ground_truth
from .errors import SearchExhausted, ThresholdError
from .sdp import SdpInstance

SQ2 = np.sqrt(2.0)
SQ3 = np.sqrt(3.0)
SQ5 = np.sqrt(5.0)


@dataclasses.dataclass(frozen=True)
class FamilySpec:
    kind: str  # maxcut | orthocut | spheres | appendix_b | appendix_c
    params: dict
    retraction: str

    def __post_init__(self):
        if self.kind not in RETRACTIONS:
            raise ValueError(f"unknown family {self.kind!r}")


RETRACTIONS = {
    "maxcut": "row_normalize",
    "orthocut": "block_polar",
    "spheres": "block_normalize",
    "appendix_b": "gauss_newton",
    "appendix_c": "row_normalize",
}


def threshold(p: int, r: int = 1) -> int:
    """Smallest constraint count ``p(p+1)/2 + p r`` allowing a forged pair."""
    return p * (p + 1) // 2 + p * r


# --- MaxCut ----------------------------------------------------------------

def maxcut_instance(n: int) -> SdpInstance:
    """``diag(X) = 1``."""
    if n < 1:
        raise ValueError("n must be positive")
    A = np.zeros((n, n, n))
    A[np.arange(n), np.arange(n), np.arange(n)] = 1.0
    return SdpInstance.from_matrices(A, np.ones(n), family="maxcut",
                                     blocks=(1,) * n, structure="diagonal")


def _pair_index(p):
    # lexicographic (i, j), i < j
    return list(itertools.combinations(range(p), 2))


def maxcut_factor(n: int, p: int) -> np.ndarray:
    if threshold(p) > n:
        raise ThresholdError(f"MaxCut pair needs p(p+1)/2 + p = {threshold(p)} <= n = {n}")
    V = np.zeros((n, p))
    for i in range(p):
        V[i, i] = 1.0
        V[p + i, i] = -1.0
    for idx, (i, j) in enumerate(_pair_index(p)):
        V[2 * p + idx, i] = V[2 * p + idx, j] = 1.0 / SQ2
    V[threshold(p):, 0] = 1.0  # filler rows
    return V


def maxcut_bad_pair(n: int, p: int):
    """``X0 = 1 1^T`` and the factor with rows ``e_i, -e_i, (e_i + e_j)/sqrt 2``.

    Returns ``(GroundTruth, V)``.
    """
    V = maxcut_factor(n, p)
    instance = maxcut_instance(n)
    return ground_truth(instance, np.ones((n, 1))), V


# --- Orthogonal-Cut ----------------------------------------------------------

def orthocut_instance(S: int, d: int) -> SdpInstance:
    """Every diagonal d x d block of X equals the identity.

    One constraint per upper-triangular entry of each block, so
    ``m = S d (d+1) / 2``.
    """
    if S < 1 or d < 1:
        raise ValueError("S and d must be positive")
    n = S * d
    mats, b = [], []
    for s in range(S):
        for a in range(d):
            for c in range(a, d):
                M = np.zeros((n, n))
                i, j = s * d + a, s * d + c
                if a == c:
                    M[i, i] = 1.0
                else:
                    M[i, j] = M[j, i] = 0.5
                mats.append(M)
                b.append(1.0 if a == c else 0.0)
    structure = "diagonal" if d == 1 else None
    return SdpInstance.from_matrices(np.array(mats), b, family="orthocut",
                                     blocks=(d,) * S, structure=structure)


_G = (
    np.array([[1, 0, 0], [0, 1, 0]], dtype=float),
    np.array([[0, 1, 0], [0, 0, 1]], dtype=float),
    np.array([[0, 0, 1], [1 / SQ2, 1 / SQ2, 0]]),
    np.array([[0, 1 / SQ2, 1 / SQ2], [1 / SQ3, 1 / SQ3, -1 / SQ3]]),
)
_H = (
    np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=float),
    np.array([[0, 1, 0, 0], [0, 0, 1, 0]], dtype=float),
    np.array([[0, 0, 1, 0], [0, 0, 0, 1]], dtype=float),
    np.array([[0, 0, 0, 1], [1, 0, 0, 0]], dtype=float),
    np.array([[1 / SQ2, 1 / SQ2, 0, 0], [0, 0, 1 / SQ2, 1 / SQ2]]),
    np.array([[0, 0, 1 / SQ2, -1 / SQ2], [3 / 5, 4 / 5, 0, 0]]),
)
_J = (
    np.eye(2),
    np.array([[0, 1], [-1, 0]], dtype=float),
    np.array([[1, 1], [1, -1]]) / SQ2,
)
# (left block, right block) of the cross-group rows
_X_3_3 = ((0, 0), (1, 2), (3, 1))  # indices into _G, _G
_X_3_4 = ((0, 0), (0, 2), (1, 0), (1, 2))  # _G, _H
_X_3_2 = ((0, 0), (1, 0))  # _G, _J


def _place(p, parts):
    """Row block of width p from ``[(column offset, block), ...]``."""
    out = np.zeros((parts[0][1].shape[0], p))
    for off, blk in parts:
        out[:, off:off + blk.shape[1]] = blk
    return out


def orthocut_d2_blocks(p: int):
    """The explicit 2 x p row blocks for d = 2, by the residue of p mod 3."""
    if p < 2:
        raise ThresholdError("orthocut with d=2 needs p >= 2")
    rem = p % 3
    groups = [(3 * q, _G) for q in range(p // 3)] if rem == 0 else \
        [(3 * q, _G) for q in range((p - 4) // 3)] if rem == 1 else \
        [(3 * q, _G) for q in range((p - 2) // 3)]
    blocks = []
    for off, _ in groups:
        blocks += [_place(p, [(off, g)]) for g in _G]
    if rem == 1:
        last_off, last, cross = p - 4, _H, _X_3_4
    elif rem == 2:
        last_off, last, cross = p - 2, _J, _X_3_2
    else:
        last_off, last, cross = None, None, None
    if last is not None:
        blocks += [_place(p, [(last_off, h)]) for h in last]
    for (o1, _), (o2, _) in itertools.combinations(groups, 2):
        blocks += [_place(p, [(o1, _G[a]), (o2, _G[b])]) / SQ2 for a, b in _X_3_3]
    if last is not None:
        for o1, _ in groups:
            blocks += [_place(p, [(o1, _G[a]), (last_off, last[b])]) / SQ2
                       for a, b in cross]
    return blocks


def orthocut_min_blocks(d: int, p: int) -> int:
    """Smallest S with ``p(p+1)/2 + p d <= S d (d+1) / 2``."""
    need = threshold(p, d)
    per = d * (d + 1) // 2
    return -(-need // per)


def orthocut_bad_pair(S: int, d: int, p: int, seed: int = 0, attempts: int = 100):
    """``X0`` = stacked identities and a minimally-secant factor V.

    d = 1 is the MaxCut pair; d = 2 uses the explicit row blocks; d >= 3
    samples blocks with orthonormal rows (seeded) until the minimally-secant
    check passes. Returns ``(GroundTruth, V)``.
    """
    if p < d:
        raise ThresholdError(f"orthocut needs p >= d (p={p}, d={d})")
    if threshold(p, d) > S * d * (d + 1) // 2:
        raise ThresholdError(
            f"orthocut pair needs p(p+1)/2 + p d = {threshold(p, d)} <= "
            f"S d (d+1)/2 = {S * d * (d + 1) // 2}")
    instance = orthocut_instance(S, d)
    U0 = np.tile(np.eye(d), (S, 1))
    truth = ground_truth(instance, U0)
    if d == 1:
        return truth, maxcut_factor(S, p)
    if d == 2:
        blocks = orthocut_d2_blocks(p)
        if len(blocks) > S:
            raise ThresholdError(f"the d=2 construction uses {len(blocks)} blocks > S={S}")
        filler = np.zeros((2, p))
        filler[:, :2] = np.eye(2)
        blocks += [filler] * (S - len(blocks))
        return truth, np.vstack(blocks)
    return truth, _random_orthocut_factor(instance, truth, S, d, p, seed, attempts)


def _random_orthocut_factor(instance, truth, S, d, p, seed, attempts):
    from .minsecant import check_min_secant  # local: minsecant imports manifold

    rng = np.random.default_rng(seed)
    for _ in range(attempts):
        blocks = []
        for _ in range(S):
            Q, _r = np.linalg.qr(rng.standard_normal((p, d)))
            blocks.append(Q.T)
        V = np.vstack(blocks)
        if check_min_secant(instance, truth, V).verdict:
            return V
    raise SearchExhausted(f"no minimally-secant factor in {attempts} attempts "
                          f"(S={S}, d={d}, p={p}, seed={seed})")


# --- product of spheres --------------------------------------------------------

def spheres_instance(dims) -> SdpInstance:
    """The diagonal of X sums to one inside each block of sizes ``dims``."""
    dims = tuple(int(d) for d in dims)
    if not dims or min(dims) < 1:
        raise ValueError("dims must be positive integers")
    n = sum(dims)
    offs = np.concatenate([[0], np.cumsum(dims)])
    A = np.zeros((len(dims), n, n))
    for s in range(len(dims)):
        idx = np.arange(offs[s], offs[s + 1])
        A[s, idx, idx] = 1.0
    structure = "diagonal" if all(d == 1 for d in dims) else None
    return SdpInstance.from_matrices(A, np.ones(len(dims)), family="spheres",
                                     blocks=dims, structure=structure)


def insert_rows(M, dims):
    """Put row s of M at the first row of block s; zeros elsewhere."""
    M = np.asarray(M, dtype=float)
    dims = tuple(dims)
    out = np.zeros((sum(dims), M.shape[1]))
    offs = np.concatenate([[0], np.cumsum(dims)[:-1]])
    out[offs] = M
    return out


def spheres_bad_pair(dims, p: int):
    dims = tuple(int(d) for d in dims)
    S = len(dims)
    if threshold(p) > S:
        raise ThresholdError(f"spheres pair needs p(p+1)/2 + p = {threshold(p)} <= S = {S}")
    instance = spheres_instance(dims)
    truth = ground_truth(instance, insert_rows(np.ones((S, 1)), dims))
    return truth, insert_rows(maxcut_factor(S, p), dims)


# --- fixtures --------------------------------------------------------------------

@dataclasses.dataclass(frozen=True, eq=False)
class AppendixCFixture:
    instance: SdpInstance
    C: np.ndarray
    truth: GroundTruth
    V: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    G: np.ndarray
    C1_core: np.ndarray  # G^T C1 G, the explicit block matrix


def appendix_c_fixture() -> AppendixCFixture:
    """Rank-2 optimum with a non-degenerate spurious point, n = m = 6, p = 2.

    Lies below the dimension threshold (slack -1) yet admits a spurious
    second-order critical point.
    """
    a, c = 2 / SQ5, 1 / SQ5
    V = np.array([[0, 1], [0, 1], [a, c], [c, a], [c, a], [0, 1]], dtype=float)
    U0 = np.array([[a, c], [-1, 0], [1, 0], [-1, 0], [a, c], [0, 1]], dtype=float)
    g1 = np.array([-SQ5, -2 + 3 / SQ5, -1, -2, 0, 1], dtype=float)
    g2 = np.zeros(6)
    e = np.eye(6)
    G = np.hstack([V, U0, e[:, :2]])
    Gi = np.linalg.inv(G)
    M = np.hstack([U0, e[:, :2]])
    core = np.zeros((6, 6))
    core[2:, 2:] = M.T @ np.diag(g1) @ M
    shift = np.zeros((6, 6))
    shift[4:, 4:] = 20 * np.eye(2)
    C = Gi.T @ (core + shift) @ Gi
    C = 0.5 * (C + C.T)
    s5 = SQ5
    C1_core = np.array([
        [6 / 5, 6 / 5, 0, 0, 0, 0],
        [6 / 5, 14 / 5 + 2 / s5, 0, 0, s5, 2 - 3 / s5],
        [0, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, 0],
        [0, s5, 0, 0, 20, 0],
        [0, 2 - 3 / s5, 0, 0, 0, 20],
    ])
    instance = maxcut_instance(6)
    truth = ground_truth(instance, U0)
    return AppendixCFixture(instance, C, truth, V, g1, g2, G, C1_core)


@dataclasses.dataclass(frozen=True, eq=False)
class AppendixBCounterexample:
    instance: SdpInstance
    truth: GroundTruth
    V: np.ndarray
    direction: np.ndarray  # tangent, range-contained, not vertical when w1 != u
    u: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


def appendix_b_instance(n: int, m: int) -> SdpInstance:
    """``A(X) = (X_11, X_{1,n-m+2}, ..., X_{1,n})`` (1-based), ``b = e_1``."""
    if not (1 <= m <= n):
        raise ValueError("need 1 <= m <= n")
    mats = []
    M = np.zeros((n, n))
    M[0, 0] = 1.0
    mats.append(M)
    for j in range(n - m + 1, n):
        M = np.zeros((n, n))
        M[0, j] = M[j, 0] = 0.5
        mats.append(M)
    b = np.zeros(m)
    b[0] = 1.0
    return SdpInstance.from_matrices(np.array(mats), b, family="appendix_b")


def appendix_b_counterexample(n: int, m: int, u=None, w1=None, w2=None,
                              rotation=None, seed: Optional[int] = 0
                              ) -> AppendixBCounterexample:
    """A 2-regular system where no (X0, V) pair is minimally secant.

    ``u, w1, w2`` have length ``n - m``; missing ones are drawn from a
    seeded normal distribution. ``rotation`` (2 x 2 orthogonal) is applied
    on the right of V and of the violating direction.
    """
    if m < 5 or m > n:
        raise ValueError("need 5 <= m <= n")
    k = n - m
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(k) if u is None else np.asarray(u, dtype=float)
    w1 = rng.standard_normal(k) if w1 is None else np.asarray(w1, dtype=float)
    w2 = rng.standard_normal(k) if w2 is None else np.asarray(w2, dtype=float)
    for name, vec in (("u", u), ("w1", w1), ("w2", w2)):
        if vec.shape != (k,):
            raise ValueError(f"{name} must have length n - m = {k}")
    R = np.eye(2) if rotation is None else np.asarray(rotation, dtype=float)
    instance = appendix_b_instance(n, m)
    U0 = np.zeros((n, 1))
    U0[0, 0] = 1.0
    U0[1:k + 1, 0] = u
    W = np.zeros((n, 2))
    W[0, 0] = 1.0
    W[1:k + 1, 0] = w1
    W[1:k + 1, 1] = w2
    D = np.zeros((n, 2))
    D[1:k + 1, 0] = w1 - u
    truth = ground_truth(instance, U0)
    return AppendixBCounterexample(instance, truth, W @ R, D @ R, u, w1, w2)
