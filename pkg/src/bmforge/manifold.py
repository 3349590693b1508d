"""Geometry of the factorized feasible set ``{V : A(V V^T) = b}``.

Tangent bases, the orthogonal projection, the Riemannian gradient of
``f_C(V) = <C, V V^T>`` and the first/second-order criticality
certificates. Tangent vectors are ``n x p`` arrays; bases are stacked as
arrays of shape ``(k, n, p)`` and are orthonormal for the Frobenius inner
product.
"""
from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, NotFirstOrderCritical, NotRegular
from .linalg import antisymmetric_basis, null_space, orth, orth_complement
from .sdp import SdpInstance, apply_A_adjoint, constraint_jacobian
from .tolerances import Tolerances, default_tolerances

_HIDDEN = {"json": False}


@dataclasses.dataclass(frozen=True, eq=False)
class TangentBasis:
    """Orthonormal bases of the tangent, vertical and horizontal spaces at V."""

    V: np.ndarray
    basis: np.ndarray  # (np - m, n, p)
    vertical: np.ndarray  # (rank-dependent, n, p); p(p-1)/2 when rank V = p
    horizontal: np.ndarray  # complement of vertical inside the tangent space

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def matrix(self) -> np.ndarray:
        """The basis as columns of an (n p) x dim matrix."""
        n, p = self.V.shape
        return self.basis.reshape(self.dim, n * p).T


def tangent_basis(instance: SdpInstance, V, tol: Optional[Tolerances] = None
                  ) -> TangentBasis:
    tol = tol or default_tolerances()
    V = np.asarray(V, dtype=float)
    n, p = V.shape
    J = constraint_jacobian(instance, V)
    T, rank = null_space(J, tol.regularity)
    if rank < instance.m:
        raise NotRegular(f"constraint Jacobian has rank {rank} < m = {instance.m}")
    k = T.shape[1]
    anti = antisymmetric_basis(p)
    if anti.shape[0]:
        vert = orth(np.stack([(V @ E).reshape(-1) for E in anti], axis=1), tol.rank)
    else:
        vert = np.zeros((n * p, 0))
    # vertical directions are tangent, so their coordinates in T are exact
    coords = T.T @ vert
    comp = orth_complement(coords, tol.rank) if vert.shape[1] else np.eye(k)
    horiz = T @ comp
    return TangentBasis(
        V,
        T.T.reshape(k, n, p),
        vert.T.reshape(vert.shape[1], n, p),
        horiz.T.reshape(horiz.shape[1], n, p),
    )


def project_tangent(basis: TangentBasis, W) -> np.ndarray:
    """Orthogonal projection of ``W`` onto the tangent space."""
    W = np.asarray(W, dtype=float)
    if W.shape != basis.V.shape:
        raise DimensionMismatch(f"W has shape {W.shape}, expected {basis.V.shape}")
    if basis.dim == 0:
        return np.zeros_like(W)
    T = basis.matrix()
    return (T @ (T.T @ W.reshape(-1))).reshape(W.shape)


def normal_multipliers(instance: SdpInstance, V, W, tol: Optional[Tolerances] = None):
    """Least-squares ``g`` minimising ``||W - A*(g) V||_F``.

    The normal space at V is ``{A*(g) V}``, so ``W - A*(g) V`` is the
    tangent projection of W. Raises NotRegular when g is not unique.
    """
    tol = tol or default_tolerances()
    V = np.asarray(V, dtype=float)
    M = 0.5 * constraint_jacobian(instance, V).T  # columns vec(A_k V)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size < instance.m or s[0] == 0.0 or s[-1] <= tol.regularity * s[0]:
        raise NotRegular("the map g -> A*(g) V is not injective at V")
    return Vt.T @ ((U.T @ np.asarray(W, dtype=float).reshape(-1)) / s)


def riemannian_gradient(instance: SdpInstance, C, V, tol=None) -> np.ndarray:
    """``2 Proj_V(C V)``, computed through the normal-space multipliers."""
    C = np.asarray(C, dtype=float)
    V = np.asarray(V, dtype=float)
    CV = C @ V
    g = normal_multipliers(instance, V, CV, tol)
    return 2.0 * (CV - apply_A_adjoint(instance, g) @ V)


@dataclasses.dataclass(frozen=True, eq=False)
class FirstOrderCertificate:
    g2: np.ndarray
    C2: np.ndarray
    residual_C2V: float
    tolerance: float
    is_critical: bool

    @property
    def verdict(self) -> str:
        return "VALID" if self.is_critical else "INVALID"


def first_order_certificate(instance: SdpInstance, C, V,
                            tol: Optional[Tolerances] = None) -> FirstOrderCertificate:
    """Decompose ``C = A*(g2) + C2`` with ``g2`` the least-squares multiplier.

    ``V`` is first-order critical iff ``C2 V = 0``; the verdict uses
    ``||C2 V||_F <= tol.critical * ||C||_F``.
    """
    tol = tol or default_tolerances()
    C = np.asarray(C, dtype=float)
    V = np.asarray(V, dtype=float)
    if C.shape != (instance.n, instance.n):
        raise DimensionMismatch(f"C has shape {C.shape}")
    g2 = normal_multipliers(instance, V, C @ V, tol)
    C2 = C - apply_A_adjoint(instance, g2)
    C2 = 0.5 * (C2 + C2.T)
    res = float(np.linalg.norm(C2 @ V))
    thr = tol.critical * float(np.linalg.norm(C))
    return FirstOrderCertificate(g2, C2, res, thr, res <= thr)


def hessian_quadratic(certificate: FirstOrderCertificate, dV1, dV2) -> float:
    """Polarised Hessian ``<C2, dV1 dV2^T + dV2 dV1^T>``.

    On the diagonal this is ``2 <C2, dV dV^T>``.
    """
    C2 = certificate.C2
    dV1 = np.asarray(dV1, dtype=float)
    dV2 = np.asarray(dV2, dtype=float)
    return float(np.sum(C2 * (dV1 @ dV2.T + dV2 @ dV1.T)))


@dataclasses.dataclass(frozen=True, eq=False)
class SecondOrderReport:
    eigenvalues: np.ndarray  # ascending
    zero_dim: int
    expected_zero_dim: int  # p(p-1)/2
    tangent_dim: int
    zero_tol: float
    psd_tol: float
    is_second_order: bool
    is_nondegenerate: bool
    first_order: FirstOrderCertificate = dataclasses.field(metadata=_HIDDEN)
    eigenvectors: np.ndarray = dataclasses.field(metadata=_HIDDEN)
    basis: TangentBasis = dataclasses.field(metadata=_HIDDEN)

    @property
    def verdict(self) -> str:
        return "VALID" if self.is_second_order else "INVALID"

    def direction(self, index: int = 0) -> np.ndarray:
        """Tangent matrix of the ``index``-th eigenvector (unit norm)."""
        return np.einsum("k,kia->ia", self.eigenvectors[:, index], self.basis.basis)


def hessian_form_matrix(C2, basis: TangentBasis) -> np.ndarray:
    """Matrix of the polarised Hessian on an orthonormal tangent basis."""
    if basis.dim == 0:
        return np.zeros((0, 0))
    return _kernels.hessian_form(C2, basis.basis)


def classify_spectrum(eigenvalues, p: int, tol: Tolerances):
    """Return ``(zero_dim, zero_tol, psd_tol, second_order, nondegenerate)``."""
    lam = np.asarray(eigenvalues, dtype=float)
    scale = max(1.0, float(np.max(np.abs(lam)))) if lam.size else 1.0
    zero_tol = tol.zero_eig * scale
    psd_tol = tol.psd * scale
    zero_dim = int(np.sum(np.abs(lam) <= zero_tol))
    second = bool(lam.size == 0 or lam[0] >= -psd_tol)
    expected = p * (p - 1) // 2
    nondeg = bool(second and zero_dim == expected
                  and (zero_dim == lam.size or lam[zero_dim] > psd_tol))
    return zero_dim, zero_tol, psd_tol, second, nondeg


def second_order_report(instance: SdpInstance, C, V, tol: Optional[Tolerances] = None,
                        basis: Optional[TangentBasis] = None,
                        require_critical: bool = True) -> SecondOrderReport:
    """Spectrum of the Hessian restricted to the tangent space at V.

    The form ``2 <(C - A*(g2)) dV, dV>`` is the Riemannian Hessian at any
    point when g2 is the least-squares multiplier; with
    ``require_critical=False`` the report is computed without insisting on
    first-order criticality (the optimizer uses this at approximate
    critical points).
    """
    tol = tol or default_tolerances()
    V = np.asarray(V, dtype=float)
    cert = first_order_certificate(instance, C, V, tol)
    if require_critical and not cert.is_critical:
        raise NotFirstOrderCritical(
            f"||C2 V|| = {cert.residual_C2V:.3e} exceeds {cert.tolerance:.3e}")
    basis = basis or tangent_basis(instance, V, tol)
    H = hessian_form_matrix(cert.C2, basis)
    if H.size:
        lam, vecs = np.linalg.eigh(H)
    else:
        lam, vecs = np.zeros(0), np.zeros((0, 0))
    p = V.shape[1]
    zero_dim, zero_tol, psd_tol, second, nondeg = classify_spectrum(lam, p, tol)
    return SecondOrderReport(lam, zero_dim, p * (p - 1) // 2, basis.dim, zero_tol,
                             psd_tol, second, nondeg, cert, vecs, basis)
