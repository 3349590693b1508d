"""SDP data: the constraint operator, its adjoint, feasibility and p-regularity.

The operator is stored densely as ``m`` symmetric ``n x n`` matrices so that
``A(X)_k = <A_k, X>``. Instances built by the family constructors may carry
a structural tag (``"diagonal"`` for MaxCut-type constraints) that enables
cheaper code paths; the dense path is always the reference.
"""
from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

from . import _kernels
from .errors import DimensionMismatch
from .linalg import numerical_rank
from .tolerances import Tolerances, default_tolerances

# Ingested matrices with relative asymmetry above this are rejected rather
# than silently symmetrised.
MAX_INGEST_ASYMMETRY = 1e-8


def symmetrize(M, name="matrix"):
    """Return ``((M + M^T) / 2, relative asymmetry)`` for a square array."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    scale = np.linalg.norm(M)
    asym = float(np.linalg.norm(M - M.T) / scale) if scale > 0 else 0.0
    if asym > MAX_INGEST_ASYMMETRY:
        raise ValueError(f"{name} is not symmetric (relative asymmetry {asym:.3e})")
    return 0.5 * (M + M.T), asym


@dataclasses.dataclass(frozen=True, eq=False)
class SdpInstance:
    """Constraint system ``A(X) = b`` of a semidefinite program.

    Attributes
    ----------
    A : ndarray, shape (m, n, n)
        Symmetric constraint matrices.
    b : ndarray, shape (m,)
    family : str or None
        Problem family tag (``maxcut``, ``orthocut``, ``spheres`` or None);
        selects the retraction used by the optimizer.
    blocks : tuple of int or None
        Row-block sizes for the block families.
    structure : str or None
        ``"diagonal"`` when ``A_k = e_k e_k^T`` (enables fast paths).
    asymmetry : float
        Largest relative asymmetry seen while ingesting ``A``.
    """

    A: np.ndarray
    b: np.ndarray
    family: Optional[str] = None
    blocks: Optional[tuple] = None
    structure: Optional[str] = None
    asymmetry: float = 0.0

    @classmethod
    def from_matrices(cls, A, b, family=None, blocks=None, structure=None):
        A = np.asarray(A, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise DimensionMismatch(f"A must have shape (m, n, n), got {A.shape}")
        m, n = A.shape[0], A.shape[1]
        if m < 1 or n < 1:
            raise DimensionMismatch("need m >= 1 and n >= 1")
        b = np.asarray(b, dtype=float).reshape(-1)
        if b.shape[0] != m:
            raise DimensionMismatch(f"b has length {b.shape[0]}, expected {m}")
        sym_A = np.empty_like(A)
        asym = 0.0
        for k in range(m):
            sym_A[k], a = symmetrize(A[k], name=f"A[{k}]")
            asym = max(asym, a)
        if blocks is not None:
            blocks = tuple(int(d) for d in blocks)
            if sum(blocks) != n:
                raise DimensionMismatch(f"blocks {blocks} do not sum to n={n}")
        if structure == "diagonal" and not _is_unit_diagonal(sym_A):
            raise ValueError("structure='diagonal' requires A_k = e_k e_k^T")
        sym_A.setflags(write=False)
        b.setflags(write=False)
        return cls(sym_A, b, family, blocks, structure, asym)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def block_offsets(self):
        if self.blocks is None:
            return None
        return np.concatenate([[0], np.cumsum(self.blocks)]).astype(np.int64)

    def transformed(self, G) -> "SdpInstance":
        """Instance for ``X -> A(G X G^T)``: constraint matrices ``G^T A_k G``."""
        G = np.asarray(G, dtype=float)
        At = np.einsum("ia,kij,jb->kab", G, self.A, G)
        return SdpInstance.from_matrices(At, self.b)


def _is_unit_diagonal(A):
    m, n = A.shape[0], A.shape[1]
    if m != n:
        return False
    eye = np.zeros((n, n))
    for k in range(m):
        eye[:] = 0.0
        eye[k, k] = 1.0
        if not np.array_equal(A[k], eye):
            return False
    return True


def _check_square(instance, X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.shape != (instance.n, instance.n):
        raise DimensionMismatch(f"{name} has shape {X.shape}, expected "
                                f"({instance.n}, {instance.n})")
    return X


def _check_factor(instance, V, name="V"):
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != instance.n:
        raise DimensionMismatch(f"{name} has shape {V.shape}, expected "
                                f"({instance.n}, p)")
    return V


def apply_A(instance: SdpInstance, X) -> np.ndarray:
    X = _check_square(instance, X)
    if instance.structure == "diagonal":
        return np.diag(X).copy()
    return _kernels.apply_A(instance.A, X)


def apply_A_adjoint(instance: SdpInstance, g) -> np.ndarray:
    g = np.asarray(g, dtype=float).reshape(-1)
    if g.shape[0] != instance.m:
        raise DimensionMismatch(f"g has length {g.shape[0]}, expected {instance.m}")
    if instance.structure == "diagonal":
        return np.diag(g)
    return _kernels.adjoint(instance.A, g)


def objective(C, X) -> float:
    C = np.asarray(C, dtype=float)
    X = np.asarray(X, dtype=float)
    if C.shape != X.shape:
        raise DimensionMismatch(f"C has shape {C.shape} but X has shape {X.shape}")
    return float(np.sum(C * X))


@dataclasses.dataclass(frozen=True)
class FeasibilityReport:
    residual: float
    min_eigenvalue: float
    tol: float
    feasible: bool


def check_feasible(instance: SdpInstance, X, tol: float = 1e-10) -> FeasibilityReport:
    X = _check_square(instance, X)
    res = float(np.max(np.abs(apply_A(instance, X) - instance.b)))
    lam = float(np.linalg.eigvalsh(0.5 * (X + X.T))[0])
    return FeasibilityReport(res, lam, tol, res <= tol and lam >= -tol)


@dataclasses.dataclass(frozen=True, eq=False)
class FactorPoint:
    """A factor ``V`` (n x p) with its rank and feasibility diagnostics."""

    V: np.ndarray
    p: int
    numerical_rank: int
    feasibility_residual: float


def factor_point(instance: SdpInstance, V, rank_tol: float = 1e-7) -> FactorPoint:
    V = _check_factor(instance, V)
    res = float(np.max(np.abs(apply_A(instance, V @ V.T) - instance.b)))
    return FactorPoint(V, V.shape[1], numerical_rank(V, rank_tol), res)


def constraint_jacobian(instance: SdpInstance, V) -> np.ndarray:
    """The m x (n p) matrix of ``dV -> A(V dV^T + dV V^T)``."""
    V = _check_factor(instance, V)
    n, p = V.shape
    if instance.structure == "diagonal":
        J = np.zeros((instance.m, n * p))
        for k in range(n):
            J[k, k * p:(k + 1) * p] = 2.0 * V[k]
        return J
    return _kernels.jacobian(instance.A, V)


@dataclasses.dataclass(frozen=True)
class RegularityReport:
    jacobian_singular_values: np.ndarray  # m values, descending
    is_regular: bool
    tolerance: float


def check_p_regular(instance: SdpInstance, V, tol: Optional[Tolerances] = None
                    ) -> RegularityReport:
    """Surjectivity test of the constraint differential at ``V``.

    ``is_regular`` holds when the m-th singular value of the Jacobian
    exceeds ``tol.regularity * sigma_max``.
    """
    tol = tol or default_tolerances()
    J = constraint_jacobian(instance, V)
    s = np.linalg.svd(J, compute_uv=False)
    m = instance.m
    sv = np.zeros(m)
    sv[:min(m, s.size)] = s[:m]
    threshold = tol.regularity * (sv[0] if sv.size else 0.0)
    regular = bool(sv[0] > 0 and sv[-1] > threshold)
    return RegularityReport(sv, regular, float(threshold))
