"""The minimally-secant condition and the dimension count behind it."""
from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

from .certifier import GroundTruth
from .linalg import numerical_rank, orth
from .manifold import TangentBasis, tangent_basis
from .sdp import SdpInstance
from .tolerances import Tolerances, default_tolerances


@dataclasses.dataclass(frozen=True)
class MinSecantReport:
    rank_V: int
    joint_rank: int
    tangent_dim: int
    range_constrained_dim: int
    target_dim: int
    property1: bool
    property2: bool
    property3: bool
    verdict: bool
    principal_angle_dim: int  # cross-check of range_constrained_dim


@dataclasses.dataclass(frozen=True)
class DimensionPrediction:
    feasible: bool
    slack: int


def dimension_predictor(n: int, m: int, p: int, r: int) -> DimensionPrediction:
    """Slack ``m - p(p+1)/2 - p r`` of the counting argument.

    A negative slack makes the condition impossible for every V.
    """
    for name, val in (("n", n), ("m", m), ("p", p), ("r", r)):
        if int(val) != val or val < 1:
            raise ValueError(f"{name} must be a positive integer, got {val!r}")
    slack = int(m) - p * (p + 1) // 2 - p * r
    return DimensionPrediction(slack >= 0, slack)


def range_space_basis(U0, V, rank_tol: float):
    """Orthonormal basis of ``{D : Range(D) in Range(U0) + Range(V)}`` in
    vectorised (row-major) form, as columns."""
    n, p = V.shape
    Q = orth(np.hstack([U0, V]), rank_tol)
    q = Q.shape[1]
    cols = np.empty((n * p, q * p))
    for a in range(q):
        for j in range(p):
            D = np.zeros((n, p))
            D[:, j] = Q[:, a]
            cols[:, a * p + j] = D.reshape(-1)
    return cols


def intersection_dim(T, S, rel_tol: float):
    """dim(span T ∩ span S) for column-orthonormal T, S (rank formula)."""
    if T.shape[1] == 0 or S.shape[1] == 0:
        return 0
    s = np.linalg.svd(np.hstack([T, S]), compute_uv=False)
    rank = int(np.sum(s > rel_tol * s[0]))
    return T.shape[1] + S.shape[1] - rank


def intersection_dim_angles(T, S, rel_tol: float):
    """Same quantity via principal angles: sines (accurate near zero) of the
    angles between span S and span T, counted when below ``rel_tol``."""
    if T.shape[1] == 0 or S.shape[1] == 0:
        return 0
    resid = S - T @ (T.T @ S)
    sines = np.linalg.svd(resid, compute_uv=False)
    return int(np.sum(sines <= rel_tol))


def check_min_secant(instance: SdpInstance, truth: GroundTruth, V,
                     tol: Optional[Tolerances] = None,
                     basis: Optional[TangentBasis] = None) -> MinSecantReport:
    """Check the three minimally-secant properties of ``(X0, V)``.

    Property 3 is tested as an equality of dimensions: the tangent
    directions whose range lies in ``Range(X0) + Range(V)`` always contain
    the ``p(p-1)/2``-dimensional vertical space, and must be no larger.
    """
    tol = tol or default_tolerances()
    V = np.asarray(V, dtype=float)
    n, p = V.shape
    basis = basis or tangent_basis(instance, V, tol)
    rank_V = numerical_rank(V, tol.rank)
    joint = numerical_rank(np.hstack([truth.U0, V]), tol.rank)
    T = basis.matrix()
    S = range_space_basis(truth.U0, V, tol.rank)
    inter = intersection_dim(T, S, tol.secant)
    inter_angles = intersection_dim_angles(T, S, tol.secant)
    target = p * (p - 1) // 2
    p1 = rank_V == p
    p2 = joint == truth.r + p
    p3 = inter == target
    return MinSecantReport(rank_V, joint, basis.dim, inter, target, p1, p2, p3,
                           bool(p1 and p2 and p3), inter_angles)
