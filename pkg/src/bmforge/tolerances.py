"""Numerical thresholds shared by every module.

All thresholds are relative; each consumer multiplies by its own scale
(largest singular value, Frobenius norm of the cost, ...). The active
default profile can be switched with the ``BMFORGE_TOL_PROFILE``
environment variable (``default``, ``strict`` or ``loose``).
"""
from __future__ import annotations

import dataclasses
import os

PROFILE_ENV = "BMFORGE_TOL_PROFILE"


@dataclasses.dataclass(frozen=True)
class Tolerances:
    regularity: float = 1e-8  # m-th Jacobian singular value vs sigma_max
    rank: float = 1e-7  # singular values kept vs sigma_max
    zero_eig: float = 1e-7  # |lambda| <= zero_eig * max(1, |lambda_max|)
    psd: float = 1e-8  # lambda_min >= -psd * max(1, |lambda_max|)
    critical: float = 1e-8  # ||C2 V||_F <= critical * ||C||_F
    kkt: float = 1e-8  # C1 PSD and complementarity, relative to ||C||
    secant: float = 1e-8  # subspace-intersection rank threshold
    pinv: float = 1e-10  # pseudo-inverse cutoff vs sigma_max
    residual: float = 1e-9  # linear-system residual for forge solves

    def scaled(self, factor: float) -> "Tolerances":
        return Tolerances(**{f.name: getattr(self, f.name) * factor
                             for f in dataclasses.fields(self)})

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


PROFILES = {
    "default": Tolerances(),
    "strict": Tolerances().scaled(1e-2),
    "loose": Tolerances().scaled(1e2),
}


def default_tolerances() -> Tolerances:
    name = os.environ.get(PROFILE_ENV, "default").strip().lower() or "default"
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown tolerance profile {name!r}; "
                         f"expected one of {sorted(PROFILES)}") from None
