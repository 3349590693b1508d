"""Riemannian descent on ``{V : A(V V^T) = b}`` with negative-curvature escape.

This is a demonstrator: terminal quality is judged by the certificates in
:mod:`bmforge.manifold` and :mod:`bmforge.certifier`, not by the solver.
"""
from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
import scipy.linalg

from . import _kernels
from .certifier import GroundTruth, ground_truth, kkt_certificate
from .errors import DimensionMismatch, NotRegular, ProjectionDiverged
from .manifold import (SecondOrderReport, first_order_certificate, riemannian_gradient,
                       second_order_report)
from .sdp import (FactorPoint, SdpInstance, apply_A, apply_A_adjoint,
                  constraint_jacobian, factor_point)
from .tolerances import Tolerances, default_tolerances

# --- retractions -------------------------------------------------------------------


def retraction_kind(instance: SdpInstance) -> str:
    fam = instance.family
    if fam in ("maxcut", "appendix_c") or instance.structure == "diagonal":
        return "row_normalize"
    if fam == "spheres" and instance.blocks is not None:
        return "block_normalize"
    if fam == "orthocut" and instance.blocks is not None:
        return "block_polar"
    return "gauss_newton"


def _block_polar(W, blocks):
    out = np.empty_like(W)
    o = 0
    for d in blocks:
        U, _, Vt = np.linalg.svd(W[o:o + d], full_matrices=False)
        out[o:o + d] = U @ Vt
        o += d
    return out


def _gauss_newton(instance, W, tol=1e-10, max_iter=50):
    scale = max(1.0, float(np.linalg.norm(instance.b)))
    for _ in range(max_iter):
        res = apply_A(instance, W @ W.T) - instance.b
        if np.linalg.norm(res) <= tol * scale:
            return W
        J = constraint_jacobian(instance, W)
        step, *_ = np.linalg.lstsq(J, res, rcond=None)
        W = W - step.reshape(W.shape)
        if not np.all(np.isfinite(W)):
            break
    raise ProjectionDiverged(f"Gauss-Newton projection did not converge in {max_iter} "
                             f"iterations")


def retract_array(instance: SdpInstance, V, dV=None) -> np.ndarray:
    """Array-valued retraction of ``V + dV`` onto the feasible factors."""
    W = np.asarray(V, dtype=float)
    if dV is not None:
        dV = np.asarray(dV, dtype=float)
        if dV.shape != W.shape:
            raise DimensionMismatch(f"dV has shape {dV.shape}, expected {W.shape}")
        W = W + dV
    kind = retraction_kind(instance)
    if kind == "row_normalize":
        # b need not be all ones in general diagonal systems
        out = _kernels.row_normalize(W)
        if not np.all(instance.b == 1.0):
            out = out * np.sqrt(np.maximum(instance.b, 0.0))[:, None]
        return out
    if kind == "block_normalize":
        return _kernels.block_normalize(W, instance.block_offsets())
    if kind == "block_polar":
        return _block_polar(W, instance.blocks)
    return _gauss_newton(instance, W)


def retract(instance: SdpInstance, V, dV=None) -> FactorPoint:
    """Retraction of ``V + dV``: row or block normalisation, block polar factor,
    or a Gauss-Newton projection for untagged constraint systems."""
    return factor_point(instance, retract_array(instance, V, dV))


def random_feasible_point(instance: SdpInstance, p: int, rng) -> np.ndarray:
    """Standard normal entries, then retraction."""
    return retract_array(instance, rng.standard_normal((instance.n, p)))


# --- descent -----------------------------------------------------------------------

@dataclasses.dataclass(frozen=True, eq=False)
class DescentTrace:
    objectives: np.ndarray  # one entry per outer iteration
    grad_norms: np.ndarray
    V: np.ndarray
    report: Optional[SecondOrderReport]
    iterations: int
    escapes: int
    status: str  # second_order | max_iter | stalled
    rng_seed: Optional[int]

    @property
    def objective(self) -> float:
        return float(self.objectives[-1])

    @property
    def max_iter_exceeded(self) -> bool:
        return self.status == "max_iter"


def _f(C, V):
    return float(np.sum((C @ V) * V))


def _inner(a, b):
    return float(np.sum(a * b))


def descend(instance: SdpInstance, C, V0, max_iter: int = 2000, tol_grad: float = 1e-7,
            tol_eig: float = 1e-6, rng_seed: Optional[int] = None,
            tol: Optional[Tolerances] = None) -> DescentTrace:
    """Monotone gradient descent with Barzilai-Borwein steps and Armijo backtracking.

    When the gradient is small (``<= tol_grad * max(1, ||C||)``) or the line
    search stalls, the Hessian spectrum is computed; a negative eigenvalue
    below ``-tol_eig * max(1, |lambda_max|)`` triggers a step along its
    eigenvector, otherwise the run stops. Running out of iterations sets
    ``status = "max_iter"`` instead of raising.
    """
    tol = tol or default_tolerances()
    C = 0.5 * (np.asarray(C, dtype=float) + np.asarray(C, dtype=float).T)
    V = np.asarray(V0, dtype=float).copy()
    if V.ndim != 2 or V.shape[0] != instance.n:
        raise DimensionMismatch(f"V0 has shape {V.shape}")
    res = np.max(np.abs(apply_A(instance, V @ V.T) - instance.b))
    if res > 1e-8 * max(1.0, float(np.linalg.norm(instance.b))):
        raise ValueError(f"V0 is infeasible (residual {res:.3e})")
    c_scale = max(1.0, float(np.linalg.norm(C)))
    g_thr = tol_grad * c_scale
    f = _f(C, V)
    objs, gnorms = [], []
    report = None
    escapes = 0
    status = "max_iter"
    alpha = 1.0 / c_scale
    prev = None  # (V, grad) at the previous accepted point
    it = 0
    for it in range(1, max_iter + 1):
        grad = riemannian_gradient(instance, C, V, tol)
        gn = float(np.linalg.norm(grad))
        objs.append(f)
        gnorms.append(gn)
        if prev is not None:
            s = V - prev[0]
            y = grad - prev[1]
            sy = abs(_inner(s, y))
            if sy > 0:
                alpha = float(np.clip(_inner(s, s) / sy, 1e-10, 1e10))
        stalled = False
        if gn > g_thr:
            step = alpha
            accepted = False
            for _ in range(60):
                W = retract_array(instance, V, -step * grad)
                fw = _f(C, W)
                if fw < f and fw <= f - 1e-4 * step * gn * gn:
                    accepted = True
                    break
                step *= 0.5
            if accepted:
                prev = (V, grad)
                V, f = W, fw
                continue
            stalled = True
        report = second_order_report(instance, C, V, tol, require_critical=False)
        lam = report.eigenvalues
        if lam.size == 0 or lam[0] >= -tol_eig * max(1.0, float(np.max(np.abs(lam)))):
            status = "stalled" if stalled and gn > 1e3 * g_thr else "second_order"
            break
        d = report.direction(0)
        if _inner(d, grad) > 0:
            d = -d
        step = max(1.0, float(np.linalg.norm(V)))
        moved = False
        for _ in range(60):
            W = retract_array(instance, V, step * d)
            fw = _f(C, W)
            if fw < f and fw <= f + 0.25 * step * step * lam[0]:
                moved = True
                break
            step *= 0.5
        if not moved:
            status = "stalled"
            break
        escapes += 1
        prev = None
        alpha = 1.0 / c_scale
        V, f = W, fw
    else:
        report = None
    if status == "max_iter":
        objs.append(f)
        gnorms.append(float(np.linalg.norm(riemannian_gradient(instance, C, V, tol))))
    return DescentTrace(np.array(objs), np.array(gnorms), V, report, it, escapes,
                        status, rng_seed)


# --- basins ----------------------------------------------------------------------

def orbit_distance(W, V) -> float:
    """``min_Q ||W - V Q||_F`` over orthogonal Q (orthogonal Procrustes)."""
    W = np.asarray(W, dtype=float)
    V = np.asarray(V, dtype=float)
    R, _ = scipy.linalg.orthogonal_procrustes(V, W)
    return float(np.linalg.norm(W - V @ R))


def round_factor(W, rel_tol: float = 1e-6):
    """Factor of ``W W^T`` keeping eigenvalues above ``rel_tol * lambda_max``."""
    lam, Q = np.linalg.eigh(W @ W.T)
    keep = lam > rel_tol * max(lam[-1], 0.0)
    return Q[:, keep] * np.sqrt(lam[keep])


def trace_bound(instance: SdpInstance) -> Optional[float]:
    """Upper bound on ``tr X`` over the feasible set, when the family gives one."""
    if instance.structure == "diagonal" or instance.family in ("maxcut", "spheres"):
        return float(np.sum(instance.b))
    if instance.family == "orthocut":
        return float(instance.n)
    return None


@dataclasses.dataclass(frozen=True)
class TerminalCertificate:
    objective: float
    lower_bound: float  # -inf when no trace bound is known and S is not PSD
    relative_gap: float
    min_eig_S: float
    certified: bool
    kkt_verdict: str  # kkt_certificate at the rounded terminal


def certify_terminal(instance: SdpInstance, C, W, rel_tol: float = 1e-6,
                     tol: Optional[Tolerances] = None) -> TerminalCertificate:
    """Dual bound at a terminal point W.

    With ``g`` the least-squares multiplier at W and ``S = C - A*(g)``,
    every feasible X has ``<C, X> >= <g, b> + min(0, lambda_min(S)) tr X``.
    The terminal is certified when ``f(W)`` is within ``rel_tol`` of that
    bound. The KKT certificate of the rounded point is reported alongside,
    with its PSD and complementarity tolerance relaxed to ``rel_tol``.
    """
    tol = tol or default_tolerances()
    C = np.asarray(C, dtype=float)
    fo = first_order_certificate(instance, C, W, tol)
    g = fo.g2
    S = C - apply_A_adjoint(instance, g)
    lam_min = float(np.linalg.eigvalsh(0.5 * (S + S.T))[0])
    tb = trace_bound(instance)
    base = float(g @ instance.b)
    if lam_min >= 0:
        lower = base
    elif tb is not None:
        lower = base + lam_min * tb
    else:
        lower = -np.inf
    fW = _f(C, W)
    rel = (fW - lower) / max(1.0, abs(fW))
    U = round_factor(W)
    # W is only accurate to the descent tolerances; check KKT at rel_tol accuracy
    kkt_tol = dataclasses.replace(tol, kkt=max(tol.kkt, rel_tol))
    try:
        truth = ground_truth(instance, U, check_extreme=False, tol=tol)
        verdict = kkt_certificate(instance, C, truth, candidate_g1=g, tol=kkt_tol,
                                  feasibility_tol=1e-6).verdict
    except (ValueError, NotRegular):
        verdict = "UNVERIFIED"
    return TerminalCertificate(fW, lower, float(rel), lam_min, bool(rel <= rel_tol), verdict)


@dataclasses.dataclass(frozen=True, eq=False)
class BasinRun:
    seed_index: int
    objective: float
    status: str
    label: str  # global | trapped | other
    orbit_distance: Optional[float]
    certificate: Optional[TerminalCertificate]
    trace: DescentTrace = dataclasses.field(metadata={"json": False})


@dataclasses.dataclass(frozen=True, eq=False)
class BasinSummary:
    num_seeds: int
    rng_seed: int
    fraction_global: float
    fraction_trapped: float
    fraction_other: float
    optimal_value: Optional[float]
    runs: tuple


def _one_run(instance, C, truth, V_spurious, p, rng_seed, i, opts, certify, tol_global,
             tol):
    rng = np.random.default_rng([rng_seed, i])
    V0 = random_feasible_point(instance, p, rng)
    trace = descend(instance, C, V0, rng_seed=rng_seed, tol=tol, **opts)
    f = trace.objective
    label = "other"
    dist = None
    if V_spurious is not None:
        dist = orbit_distance(trace.V, V_spurious)
    if truth is not None:
        f_opt = float(np.sum(C * truth.X0))
        if f <= f_opt + tol_global * max(1.0, abs(f_opt)):
            label = "global"
    if label == "other" and dist is not None and \
            dist <= 1e-4 * float(np.linalg.norm(V_spurious)):
        label = "trapped"
    cert = certify_terminal(instance, C, trace.V, tol_global, tol) if certify else None
    if truth is None and cert is not None and cert.certified:
        label = "global"
    return BasinRun(i, f, trace.status, label, dist, cert, trace)


def basin_experiment(instance: SdpInstance, C, truth: Optional[GroundTruth] = None,
                     V_spurious=None, num_seeds: int = 10, rng_seed: int = 0,
                     p: Optional[int] = None, certify: bool = False,
                     tol_global: float = 1e-6, workers: int = 1,
                     descend_options: Optional[dict] = None,
                     tol: Optional[Tolerances] = None) -> BasinSummary:
    """Descend from ``num_seeds`` random feasible starts and classify terminals.

    Seed ``i`` uses ``default_rng([rng_seed, i])``, so results do not depend
    on ``workers``. A terminal is ``global`` when its objective is within
    ``tol_global`` (relative) of ``<C, X0>`` (or, without ``truth``, when the
    terminal dual bound certifies it), ``trapped`` when its orbit distance to
    ``V_spurious`` is at most ``1e-4 ||V_spurious||_F``, else ``other``.
    """
    if num_seeds < 1:
        raise ValueError("num_seeds must be >= 1")
    C = np.asarray(C, dtype=float)
    if V_spurious is not None:
        V_spurious = np.asarray(V_spurious, dtype=float)
        p = V_spurious.shape[1] if p is None else p
    if p is None:
        raise ValueError("give p or V_spurious")
    opts = dict(descend_options or {})
    args = (instance, C, truth, V_spurious, p, rng_seed)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(lambda i: _one_run(*args, i, opts, certify, tol_global, tol),
                               range(num_seeds)))
    else:
        runs = [_one_run(*args, i, opts, certify, tol_global, tol) for i in range(num_seeds)]
    labels = [r.label for r in runs]
    f_opt = float(np.sum(C * truth.X0)) if truth is not None else None
    return BasinSummary(
        num_seeds, rng_seed,
        labels.count("global") / num_seeds,
        labels.count("trapped") / num_seeds,
        labels.count("other") / num_seeds,
        f_opt, tuple(runs))
