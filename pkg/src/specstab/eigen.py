"""Symmetric eigensolves, spectral gaps, and the unstructured ambiguity distance.

The kth spectral gap of the graph Laplacian, divided by sqrt(2), is the
Frobenius distance from L(W) to the nearest symmetric matrix whose kth and
(k+1)-st eigenvalues coalesce; the explicit minimizer is a rank-two update
of L(W) along the kth and (k+1)-st eigenvectors.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .graph_core import PatternMatrix, WeightMatrix, laplacian

__all__ = [
    "EigenSystem",
    "GapReport",
    "eig_symmetric",
    "eigen_pair",
    "spectral_gap",
    "unstructured_minimizer",
    "connected_components_via_kernel",
    "COALESCENCE_TOL",
]

# Pairs closer than this (relative to eigenvalue scale) are treated as coalesced.
COALESCENCE_TOL = 1e-8

# Above this size, eigen_pair solves only the lower part of the spectrum.
_SUBSET_MIN_N = 48


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Ascending eigenvalues with orthonormal eigenvectors of a symmetric matrix."""

    values: np.ndarray
    vectors: np.ndarray

    def pair(self, k: int) -> tuple[float, float, np.ndarray, np.ndarray]:
        """(lambda_k, lambda_{k+1}, x_k, x_{k+1}) with 1-based k."""
        return (
            float(self.values[k - 1]),
            float(self.values[k]),
            self.vectors[:, k - 1],
            self.vectors[:, k],
        )


@dataclass(frozen=True)
class GapReport:
    """kth spectral gap of L(W) and its sqrt(2)-scaled value."""

    k: int
    lambda_k: float
    lambda_k1: float
    gap: float
    scaled_gap: float


def _normalize_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude component is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eig_symmetric(a: np.ndarray) -> EigenSystem:
    """Full eigendecomposition of a symmetric matrix, ascending eigenvalues.

    Eigenvector signs are normalized for reproducible downstream traces.
    """
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite matrix entry")
    if a.shape[0] != a.shape[1]:
        raise ValueError("square matrix required")
    values, vectors = np.linalg.eigh(a)
    return EigenSystem(values=values, vectors=_normalize_signs(vectors))


def eigen_pair(a: np.ndarray, k: int) -> tuple[float, float, np.ndarray, np.ndarray]:
    """(lambda_k, lambda_{k+1}, x_k, x_{k+1}) of a symmetric matrix, 1-based k.

    For larger matrices only the smallest k+1 eigenpairs are computed; the
    dense full solve is used at desk scale where it is both fast and robust.
    """
    n = a.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k={k} out of range for n={n}")
    if n >= _SUBSET_MIN_N:
        from scipy.linalg import eigh

        values, vectors = eigh(a, subset_by_index=(0, k), overwrite_a=False)
        vectors = _normalize_signs(vectors)
        return float(values[k - 1]), float(values[k]), vectors[:, k - 1], vectors[:, k]
    es = eig_symmetric(a)
    return es.pair(k)


def spectral_gap(w: WeightMatrix | PatternMatrix, k: int) -> GapReport:
    """gap = lambda_{k+1} - lambda_k of L(W); gap/sqrt(2) is the unstructured
    distance to ambiguity."""
    n = w.pattern.n
    if not 1 <= k < n:
        raise ValueError(f"k={k} out of range for n={n}")
    lam_k, lam_k1, _, _ = eigen_pair(laplacian(w), k)
    gap = lam_k1 - lam_k
    return GapReport(k=k, lambda_k=lam_k, lambda_k1=lam_k1, gap=gap,
                     scaled_gap=gap / math.sqrt(2.0))


def unstructured_minimizer(w: WeightMatrix, k: int) -> np.ndarray:
    """Nearest symmetric matrix (any structure) with coalesced kth pair.

    Returns L(W) + (g/2) x_k x_k^T - (g/2) x_{k+1} x_{k+1}^T with
    g = lambda_{k+1} - lambda_k, which moves both eigenvalues to their
    midpoint and sits at Frobenius distance g/sqrt(2) from L(W).
    """
    lap = laplacian(w)
    n = lap.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k={k} out of range for n={n}")
    es = eig_symmetric(lap)
    lam_k, lam_k1, x_k, x_k1 = es.pair(k)
    gap = lam_k1 - lam_k
    if gap <= COALESCENCE_TOL * max(1.0, abs(lam_k1)):
        return lap
    lo_simple = k == 1 or lam_k - es.values[k - 2] > COALESCENCE_TOL * max(1.0, abs(lam_k))
    hi_simple = k + 1 == n or es.values[k + 1] - lam_k1 > COALESCENCE_TOL * max(1.0, abs(lam_k1))
    if not (lo_simple and hi_simple):
        warnings.warn(f"eigenvalue {k} or {k + 1} is not simple; minimizer may not be unique")
    return lap + 0.5 * gap * np.outer(x_k, x_k) - 0.5 * gap * np.outer(x_k1, x_k1)


def connected_components_via_kernel(w: WeightMatrix, tol: float = 1e-8) -> int:
    """Number of connected components = multiplicity of the eigenvalue 0."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    values = np.linalg.eigvalsh(laplacian(w))
    return int(np.sum(values < tol))
