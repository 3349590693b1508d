"""Certified construction of spurious second-order critical points for
low-rank (Burer-Monteiro) factorizations of semidefinite programs."""

__version__ = "0.1.0"
