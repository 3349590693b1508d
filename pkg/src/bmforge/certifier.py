"""Global-optimality certificates for the convex problem.

A feasible ``X0`` is optimal iff ``C = A*(g1) + C1`` with ``C1`` PSD and
``C1 X0 = 0``. Strict complementarity (``rank C1 = n - rank X0``) together
with extremality of ``X0`` in the feasible set makes it the unique solution.
"""
from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

from .errors import DimensionMismatch
from .linalg import least_norm_solve, numerical_rank, symmetric_basis
from .sdp import SdpInstance, apply_A, apply_A_adjoint, check_feasible, objective
from .tolerances import Tolerances, default_tolerances


@dataclasses.dataclass(frozen=True, eq=False)
class GroundTruth:
    U0: np.ndarray
    X0: np.ndarray
    r: int
    extreme: Optional[bool] = None
    nullity: Optional[int] = None


def ground_truth(instance: SdpInstance, U0, check_extreme: bool = True,
                 tol: Optional[Tolerances] = None) -> GroundTruth:
    tol = tol or default_tolerances()
    U0 = np.asarray(U0, dtype=float)
    if U0.ndim == 1:
        U0 = U0[:, None]
    if U0.shape[0] != instance.n:
        raise DimensionMismatch(f"U0 has {U0.shape[0]} rows, expected {instance.n}")
    X0 = U0 @ U0.T
    r = numerical_rank(U0, tol.rank)
    truth = GroundTruth(U0, X0, r)
    if check_extreme:
        extreme, nullity = check_extreme_point(instance, truth, tol)
        truth = dataclasses.replace(truth, extreme=extreme, nullity=nullity)
    return truth


def check_extreme_point(instance: SdpInstance, truth: GroundTruth,
                        tol: Optional[Tolerances] = None):
    """Extremality of ``X0 = U0 U0^T`` in the feasible set.

    ``X0`` is extreme iff ``S -> A(U0 S U0^T)`` is injective on symmetric
    r x r matrices. Returns ``(extreme, nullity)``.
    """
    tol = tol or default_tolerances()
    U0 = truth.U0
    basis = symmetric_basis(U0.shape[1])
    cols = [apply_A(instance, U0 @ S @ U0.T) for S in basis]
    M = np.stack(cols, axis=1)
    rank = numerical_rank(M, tol.rank) if np.any(M) else 0
    nullity = len(cols) - rank
    return nullity == 0, nullity


@dataclasses.dataclass(frozen=True, eq=False)
class KktCertificate:
    g1: np.ndarray
    C1: np.ndarray
    min_eig_C1: float
    rank_C1: int
    compl_residual: float
    strict: bool
    duality_gap: float
    decomposition_residual: float
    multiplier_source: str  # "candidate" or "least_norm"
    solve_residual: float
    psd_tol: float
    compl_tol: float
    verdict: str  # VALID | INVALID | UNVERIFIED
    unique: bool  # strict and X0 extreme

    @property
    def valid(self) -> bool:
        return self.verdict == "VALID"


def kkt_certificate(instance: SdpInstance, C, truth: GroundTruth, candidate_g1=None,
                    tol: Optional[Tolerances] = None,
                    feasibility_tol: float = 1e-8) -> KktCertificate:
    """Dual certificate for optimality of ``X0``.

    Without a candidate multiplier, ``g1`` is the least-norm solution of
    ``(C - A*(g)) U0 = 0``. A failed recovery is reported as UNVERIFIED,
    never as a disproof; a supplied candidate that fails is INVALID.
    """
    tol = tol or default_tolerances()
    C = np.asarray(C, dtype=float)
    if C.shape != (instance.n, instance.n):
        raise DimensionMismatch(f"C has shape {C.shape}")
    feas = check_feasible(instance, truth.X0,
                          tol=feasibility_tol * max(1.0, np.linalg.norm(instance.b)))
    if not feas.feasible:
        raise ValueError(f"X0 is not feasible (residual {feas.residual:.3e}, "
                         f"min eigenvalue {feas.min_eigenvalue:.3e})")
    U0 = truth.U0
    if candidate_g1 is not None:
        g1 = np.asarray(candidate_g1, dtype=float).reshape(-1)
        if g1.shape[0] != instance.m:
            raise DimensionMismatch(f"candidate g1 has length {g1.shape[0]}")
        source, solve_res = "candidate", 0.0
    else:
        # columns vec(A_k U0); rhs vec(C U0)
        M = np.stack([(instance.A[k] @ U0).reshape(-1) for k in range(instance.m)],
                     axis=1)
        g1, solve_res, _ = least_norm_solve(M, (C @ U0).reshape(-1), tol.pinv)
        source = "least_norm"
    C1 = C - apply_A_adjoint(instance, g1)
    C1 = 0.5 * (C1 + C1.T)
    c_norm = max(1.0, float(np.linalg.norm(C)))
    x_norm = max(1.0, float(np.linalg.norm(truth.X0)))
    psd_tol = tol.kkt * c_norm
    compl_tol = tol.kkt * c_norm * x_norm
    lam = np.linalg.eigvalsh(C1)
    min_eig = float(lam[0])
    rank_C1 = numerical_rank(C1, tol.rank)
    compl = float(np.linalg.norm(C1 @ truth.X0))
    strict = rank_C1 == instance.n - truth.r
    gap = abs(float(g1 @ instance.b) - objective(C, truth.X0))
    decomp = float(np.linalg.norm(C - apply_A_adjoint(instance, g1) - C1)) / c_norm
    ok = min_eig >= -psd_tol and compl <= compl_tol
    if ok:
        verdict = "VALID"
    elif source == "candidate":
        verdict = "INVALID"
    else:
        verdict = "UNVERIFIED"
    unique = bool(ok and strict and truth.extreme)
    return KktCertificate(g1, C1, min_eig, rank_C1, compl, bool(strict), gap, decomp,
                          source, solve_res, psd_tol, compl_tol, verdict, unique)


def optimality_gap(instance: SdpInstance, C, truth: GroundTruth, V) -> float:
    """``<C, V V^T> - <C, X0>``."""
    V = np.asarray(V, dtype=float)
    if V.shape[0] != instance.n:
        raise DimensionMismatch(f"V has {V.shape[0]} rows, expected {instance.n}")
    return objective(C, V @ V.T) - objective(C, truth.X0)
