"""Construct a cost matrix with a planted optimum and a planted spurious point.

Given a constraint system, an extreme point ``X0 = U0 U0^T`` of rank r and a
factor V of width p at which the minimally-secant condition holds, the
pipeline works in the coordinates where ``X0 = blockdiag(I_r, 0)`` and
``V = [0; I_p; 0]``:

1. ``G = [U0 V W]`` with W an orthonormal complement (``change_of_basis``);
2. a multiplier g1 whose adjoint has the prescribed (1,2) and (2,2) blocks
   (``solve_g1``);
3. a PD block ``D1`` making ``C1 = blockdiag(0_r, D1)`` a strict dual slack
   (``build_D1``);
4. a shift ``t P`` on the trailing block so that the Hessian at V is
   positive on the horizontal space (``build_t_shift``);
5. map back with ``C = G^{-T} C~ G^{-1}`` and re-certify from scratch.
"""
from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np
import scipy.linalg

from . import _kernels
from .certifier import (GroundTruth, KktCertificate, check_extreme_point, kkt_certificate,
                        optimality_gap)
from .errors import (DependentColumns, G3NotNegDef, PreconditionError, ForgeError,
                     ShiftNotPD, SystemInconsistent)
from .linalg import least_norm_solve, numerical_rank, orth_complement
from .manifold import (FirstOrderCertificate, SecondOrderReport,
                       hessian_form_matrix, second_order_report, tangent_basis)
from .minsecant import MinSecantReport, check_min_secant, dimension_predictor
from .sdp import SdpInstance, apply_A, apply_A_adjoint, check_p_regular
from .tolerances import Tolerances, default_tolerances

_HIDDEN = {"json": False}


@dataclasses.dataclass(frozen=True, eq=False)
class ForgeIntermediates:
    """Every quantity of the construction, in transformed coordinates unless
    stated otherwise."""

    G: np.ndarray  # [U0 V W], original <- transformed
    cond_G: float
    g1: np.ndarray
    solve_residual: float
    solve_rank: int
    G1: np.ndarray
    G2: np.ndarray
    G3: np.ndarray
    G4: np.ndarray
    G5: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    D1: np.ndarray
    lam: float
    lam_threshold: float
    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray
    t: float
    t_threshold: float
    C1: np.ndarray  # blockdiag(0_r, D1)
    C2: np.ndarray  # A~*(g1) + C1
    C1_mod: np.ndarray  # C1 + t P
    C2_mod: np.ndarray  # C2 + t P, the transformed cost
    transformed_eigenvalues: np.ndarray  # Hessian of C2_mod on the tangent space at V~
    transformed_gram: np.ndarray = dataclasses.field(metadata=_HIDDEN)
    transformed_form: np.ndarray = dataclasses.field(metadata=_HIDDEN)


@dataclasses.dataclass(frozen=True, eq=False)
class ForgeResult:
    C: np.ndarray
    intermediates: ForgeIntermediates
    kkt: KktCertificate
    first_order: FirstOrderCertificate
    second_order: SecondOrderReport
    min_secant: MinSecantReport
    gap: float

    @property
    def valid(self) -> bool:
        return bool(self.kkt.valid and self.kkt.strict and self.first_order.is_critical
                    and self.second_order.is_nondegenerate and self.min_secant.verdict
                    and self.gap > 0)


# --- stages ---------------------------------------------------------------------

def change_of_basis(instance: SdpInstance, truth: GroundTruth, V,
                    tol: Optional[Tolerances] = None):
    """Return ``(G, transformed_instance, X0~, V~)``.

    ``G = [U0 V W]`` with W an orthonormal basis of the complement of
    ``span [U0 V]``; the transformed operator is ``X -> A(G X G^T)``.
    """
    tol = tol or default_tolerances()
    V = np.asarray(V, dtype=float)
    n, p = V.shape
    r = truth.U0.shape[1]
    UV = np.hstack([truth.U0, V])
    if numerical_rank(UV, tol.rank) < r + p:
        raise DependentColumns("the columns of [U0 V] are linearly dependent")
    W = orth_complement(UV, tol.rank)
    G = np.hstack([UV, W])
    Xt = np.zeros((n, n))
    Xt[:r, :r] = np.eye(r)
    Vt = np.zeros((n, p))
    Vt[r:r + p] = np.eye(p)
    return G, instance.transformed(G), Xt, Vt


def _L_rows(r, p):
    """Index pairs picked by L: the (1,2) block and the upper (2,2) block."""
    rows = [(i, r + j) for i in range(r) for j in range(p)]
    rows += [(r + a, r + b) for a in range(p) for b in range(a, p)]
    return rows


def solve_g1(transformed: SdpInstance, r: int, p: int, tol: Optional[Tolerances] = None,
             R1=None, R2=None):
    """Least-norm g1 with ``A~*(g1)`` having blocks ``(R1, R2)`` at (1,2), (2,2).

    Defaults ``R1 = 0``, ``R2 = -I_p``. Returns ``(g1, blocks, residual,
    rank)`` where ``blocks`` maps ``G1..G5, R1, R2`` to arrays.
    """
    tol = tol or default_tolerances()
    R1 = np.zeros((r, p)) if R1 is None else np.asarray(R1, dtype=float)
    R2 = -np.eye(p) if R2 is None else np.asarray(R2, dtype=float)
    target = np.zeros((transformed.n, transformed.n))
    target[:r, r:r + p] = R1
    target[r:r + p, r:r + p] = R2
    rows = _L_rows(r, p)
    ii = np.array([i for i, _ in rows], dtype=int)
    jj = np.array([j for _, j in rows], dtype=int)
    K = transformed.A[:, ii, jj].T  # (rows, m)
    y = target[ii, jj]
    g1, res, rank = least_norm_solve(K, y, tol.pinv)
    scale = max(1.0, float(np.linalg.norm(y)))
    if not np.isfinite(res) or res > tol.residual * scale:
        raise SystemInconsistent(
            f"L(A~*(g)) = (R1, R2) has residual {res:.3e} (rank {rank} of {len(rows)})")
    M = apply_A_adjoint(transformed, g1)
    s = r + p
    blocks = {
        "G1": M[:r, :r], "G2": M[:r, s:], "G3": M[r:s, r:s], "G4": M[r:s, s:],
        "G5": M[s:, s:], "R1": M[:r, r:s], "R2": M[r:s, r:s],
    }
    return g1, {k: v.copy() for k, v in blocks.items()}, res, rank


def build_D1(G3, G4, margin: float = 1.0, lam: Optional[float] = None):
    """``D1 = [[-G3, -G4], [-G4^T, lam I]]`` with lam above the Schur threshold.

    The threshold is ``lambda_max(G4^T (-G3)^{-1} G4)``; ``lam`` overrides
    the default ``max(0, threshold) + margin``. Returns
    ``(D1, lam, threshold)``.
    """
    G3 = np.asarray(G3, dtype=float)
    G4 = np.asarray(G4, dtype=float)
    p, k = G4.shape
    negG3 = -0.5 * (G3 + G3.T)
    try:
        Lc = np.linalg.cholesky(negG3)
    except np.linalg.LinAlgError:
        raise G3NotNegDef("G3 is not negative definite") from None
    if k:
        Y = scipy.linalg.solve_triangular(Lc, G4, lower=True)
        thr = float(np.linalg.eigvalsh(Y.T @ Y)[-1])
    else:
        thr = 0.0
    if lam is None:
        lam = max(0.0, thr) + margin
    D1 = np.block([[negG3, -G4], [-G4.T, lam * np.eye(k)]])
    if np.linalg.eigvalsh(D1)[0] <= 0:
        raise G3NotNegDef(f"D1 is not positive definite at lambda = {lam:.6g}")
    return D1, float(lam), thr


def shift_matrix(n: int, r: int, p: int):
    P = np.zeros((n, n))
    P[r + p:, r + p:] = np.eye(n - r - p)
    return P


def build_t_shift(transformed: SdpInstance, Vt, C2, r: int, margin: float = 1.0,
                  t: Optional[float] = None, tol: Optional[Tolerances] = None):
    """Shift ``C2 + t P`` making the Hessian positive on the horizontal space.

    ``t`` defaults to ``max(0, largest eigenvalue of the pencil
    (-Q_C2, Q_shift)) + margin`` where both forms are restricted to the
    horizontal space at V~. Returns ``(t, threshold, P)``.
    """
    tol = tol or default_tolerances()
    n, p = Vt.shape
    P = shift_matrix(n, r, p)
    basis = tangent_basis(transformed, Vt, tol)
    H = basis.horizontal
    if H.shape[0] == 0:
        thr = 0.0
    else:
        Qc = _kernels.hessian_form(C2, H)
        Qs = _kernels.hessian_form(P, H)
        lam_s = np.linalg.eigvalsh(Qs)
        if lam_s[0] <= tol.psd * max(1.0, lam_s[-1]):
            raise ShiftNotPD(f"shift form is not positive definite on the horizontal "
                             f"space (min eigenvalue {lam_s[0]:.3e})")
        thr = float(scipy.linalg.eigh(-Qc, Qs, eigvals_only=True)[-1])
    if t is None:
        t = max(0.0, thr) + margin
    if H.shape[0]:
        lam = np.linalg.eigvalsh(Qc + t * Qs)
        if lam[0] <= 0:
            raise ShiftNotPD(f"Q_C2 + t Q_shift not positive definite at t = {t:.6g}")
    return float(t), thr, P


# --- pipeline ---------------------------------------------------------------------

def check_preconditions(instance: SdpInstance, truth: GroundTruth, V,
                        tol: Optional[Tolerances] = None) -> MinSecantReport:
    """Raise PreconditionError (with a stage label) unless the pipeline applies."""
    tol = tol or default_tolerances()
    V = np.asarray(V, dtype=float)
    n, p = V.shape
    if n != instance.n:
        raise PreconditionError("input", f"V has {n} rows, expected {instance.n}")
    pred = dimension_predictor(instance.n, instance.m, p, truth.r)
    if not pred.feasible:
        raise PreconditionError(
            "dimension",
            f"p(p+1)/2 + p r = {p * (p + 1) // 2 + p * truth.r} exceeds m = {instance.m} "
            f"(slack {pred.slack})", slack=pred.slack)
    if truth.r + p > n:
        raise PreconditionError("dimension", f"r + p = {truth.r + p} exceeds n = {n}")
    extreme = truth.extreme
    if extreme is None:
        extreme, _ = check_extreme_point(instance, truth, tol)
    if not extreme:
        raise PreconditionError("extreme", "X0 is not an extreme point of the feasible set")
    if truth.U0.shape[1] != truth.r:
        raise PreconditionError("extreme", "U0 must have full column rank r")
    reg = check_p_regular(instance, V, tol)
    if not reg.is_regular:
        raise PreconditionError("regular", "the constraints are not regular at V",
                                sigma_min=float(reg.jacobian_singular_values[-1]))
    res = float(np.max(np.abs(apply_A(instance, V @ V.T) - instance.b)))
    if res > 1e-8 * max(1.0, float(np.linalg.norm(instance.b))):
        raise PreconditionError("feasible", f"V is infeasible (residual {res:.3e})")
    ms = check_min_secant(instance, truth, V, tol)
    if not ms.verdict:
        raise PreconditionError(
            "min_secant",
            f"minimally-secant condition fails (properties {ms.property1}, "
            f"{ms.property2}, {ms.property3})")
    return ms


def forge(instance: SdpInstance, truth: GroundTruth, V, lambda_margin: float = 1.0,
          t_margin: float = 1.0, lam: Optional[float] = None, t: Optional[float] = None,
          tol: Optional[Tolerances] = None) -> ForgeResult:
    """Run the full construction and certify the result.

    Parameters
    ----------
    lambda_margin, t_margin : float
        Added to the exact thresholds for ``lambda`` and ``t``.
    lam, t : float, optional
        Explicit values overriding threshold + margin.

    Raises
    ------
    PreconditionError
        When an input hypothesis fails (stage in ``.stage``).
    ForgeError
        When a pipeline stage or the final certification fails.
    """
    tol = tol or default_tolerances()
    V = np.asarray(V, dtype=float)
    ms = check_preconditions(instance, truth, V, tol)
    n, p = V.shape
    r = truth.r
    try:
        G, inst_t, _Xt, Vt = change_of_basis(instance, truth, V, tol)
        g1, blk, res, rank = solve_g1(inst_t, r, p, tol)
        D1, lam_v, lam_thr = build_D1(blk["G3"], blk["G4"], lambda_margin, lam)
    except (DependentColumns, SystemInconsistent, G3NotNegDef) as exc:
        raise ForgeError(type(exc).__name__, str(exc)) from exc
    At_g1 = apply_A_adjoint(inst_t, g1)
    C1 = np.zeros((n, n))
    C1[r:, r:] = D1
    C2 = At_g1 + C1
    try:
        t_v, t_thr, P = build_t_shift(inst_t, Vt, C2, r, t_margin, t, tol)
    except ShiftNotPD as exc:
        raise ForgeError("ShiftNotPD", str(exc)) from exc
    C1_mod = C1 + t_v * P
    C2_mod = C2 + t_v * P
    s = r + p
    F3 = blk["G5"] + lam_v * np.eye(n - s)

    Gi = np.linalg.inv(G)
    C = Gi.T @ C2_mod @ Gi
    C = 0.5 * (C + C.T)

    # transformed-coordinate Hessian data for the round-trip comparison
    tb = tangent_basis(inst_t, Vt, tol)
    Ht = hessian_form_matrix(C2_mod, tb)
    mapped = np.einsum("ij,kja->kia", G, tb.basis)
    gram = np.einsum("kia,lia->kl", mapped, mapped)
    eig_t = np.linalg.eigvalsh(Ht) if Ht.size else np.zeros(0)

    inter = ForgeIntermediates(
        G=G, cond_G=float(np.linalg.cond(G)), g1=g1, solve_residual=res, solve_rank=rank,
        G1=blk["G1"], G2=blk["G2"], G3=blk["G3"], G4=blk["G4"], G5=blk["G5"],
        R1=blk["R1"], R2=blk["R2"], D1=D1, lam=lam_v, lam_threshold=lam_thr,
        F1=blk["G1"], F2=blk["G2"], F3=F3, t=t_v, t_threshold=t_thr,
        C1=C1, C2=C2, C1_mod=C1_mod, C2_mod=C2_mod, transformed_eigenvalues=eig_t,
        transformed_gram=gram, transformed_form=Ht,
    )
    kkt = kkt_certificate(instance, C, truth, candidate_g1=g1, tol=tol)
    so = second_order_report(instance, C, V, tol, require_critical=False)
    fo = so.first_order
    gap = optimality_gap(instance, C, truth, V)
    result = ForgeResult(C, inter, kkt, fo, so, ms, gap)
    if not result.valid:
        raise ForgeError("certify", _failure_summary(result))
    return result


def _failure_summary(res: ForgeResult) -> str:
    parts = []
    if not res.kkt.valid:
        parts.append(f"KKT {res.kkt.verdict} (min eig C1 {res.kkt.min_eig_C1:.3e})")
    if not res.kkt.strict:
        parts.append(f"rank C1 = {res.kkt.rank_C1}")
    if not res.first_order.is_critical:
        parts.append(f"||C2 V|| = {res.first_order.residual_C2V:.3e}")
    if not res.second_order.is_nondegenerate:
        parts.append(f"Hessian zero dim {res.second_order.zero_dim} "
                     f"(expected {res.second_order.expected_zero_dim}), "
                     f"min eig {res.second_order.eigenvalues[:1]}")
    if res.gap <= 0:
        parts.append(f"gap {res.gap:.3e}")
    return "certification failed: " + "; ".join(parts)


def round_trip_spectra(result: ForgeResult):
    """Hessian spectra at V from both coordinate systems.

    G is not orthogonal, so the transformed form is compared through the
    generalized problem with the Gram matrix of the mapped tangent basis.
    Returns ``(original, transformed_generalized)``, both ascending.
    """
    inter = result.intermediates
    orig = np.asarray(result.second_order.eigenvalues)
    if inter.transformed_form.size == 0:
        return orig, np.zeros(0)
    gen = scipy.linalg.eigh(inter.transformed_form, inter.transformed_gram,
                            eigvals_only=True)
    return orig, np.sort(gen)
