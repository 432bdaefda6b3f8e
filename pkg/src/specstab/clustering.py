"""Unnormalized spectral clustering: eigenvector embedding plus k-means.

Vertices are embedded as rows of the matrix of eigenvectors belonging to
the k smallest Laplacian eigenvalues, then clustered by Lloyd's algorithm
with k-means++ seeding.  Everything is deterministic given the seed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eigen import eig_symmetric
from .graph_core import WeightMatrix, laplacian

__all__ = ["ClusterAssignment", "Embedding", "spectral_embed", "kmeans", "spectral_cluster"]

KMEANS_RESTARTS = 20
KMEANS_MAX_ITER = 100


@dataclass(frozen=True, eq=False)
class Embedding:
    """Per-vertex rows of the spectral embedding matrix X = [x_1 | ... | x_k]."""

    rows: np.ndarray  # shape (n, k)


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray  # per-vertex label in [0, k)
    k: int
    inertia: float


def spectral_embed(w: WeightMatrix, k: int, skip_kernel: bool = False) -> Embedding:
    """Embed vertices by eigenvectors of the k smallest Laplacian eigenvalues.

    By default the kernel eigenvector (eigenvalue 0) is included, which is
    the standard choice.  skip_kernel=True instead takes the k smallest
    eigenvalues above the coalescence threshold, for the literal reading of
    "smallest nonzero eigenvalues".
    """
    n = w.pattern.n
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for n={n}")
    es = eig_symmetric(laplacian(w))
    if skip_kernel:
        scale = max(1.0, float(abs(es.values[-1])))
        nonzero = np.flatnonzero(es.values > 1e-10 * scale)
        if len(nonzero) < k:
            raise ValueError(f"fewer than k={k} nonzero eigenvalues")
        cols = nonzero[:k]
    else:
        cols = np.arange(k)
    return Embedding(rows=es.vectors[:, cols].copy())


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: subsequent centers drawn with probability
    proportional to squared distance to the nearest chosen center."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    dist_sq = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = dist_sq.sum()
        if total <= 0:
            centers[i:] = points[rng.integers(n, size=k - i)]
            break
        centers[i] = points[rng.choice(n, p=dist_sq / total)]
        dist_sq = np.minimum(dist_sq, np.sum((points - centers[i]) ** 2, axis=1))
    return centers


def _assign(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d, axis=1)  # ties break toward the lowest index
    return labels, d[np.arange(len(points)), labels]


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    centers = _kmeans_pp_init(points, k, rng)
    labels = np.full(len(points), -1)
    for _ in range(KMEANS_MAX_ITER):
        new_labels, dist_sq = _assign(points, centers)
        # Empty-cluster repair: re-seed at the point farthest from its center.
        for c in range(k):
            if not np.any(new_labels == c):
                far = int(np.argmax(dist_sq))
                centers[c] = points[far]
                new_labels, dist_sq = _assign(points, centers)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            centers[c] = points[labels == c].mean(axis=0)
    _, dist_sq = _assign(points, centers)
    return labels, float(dist_sq.sum())


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel clusters in order of first appearance, for reproducible output."""
    mapping: dict[int, int] = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


def kmeans(points: np.ndarray, k: int, seed: int,
           restarts: int = KMEANS_RESTARTS) -> ClusterAssignment:
    """Best-of-restarts Lloyd iteration; deterministic given the seed.

    The returned assignment has every cluster non-empty and the lowest
    inertia over all restarts (ties broken by the earliest restart).
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if len(points) == 0:
        raise ValueError("empty input")
    if k > len(points):
        raise ValueError(f"k={k} exceeds number of points {len(points)}")
    streams = np.random.SeedSequence(seed).spawn(restarts)
    best_labels, best_inertia = None, np.inf
    for ss in streams:
        labels, inertia = _lloyd(points, k, np.random.default_rng(ss))
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return ClusterAssignment(labels=_canonical_labels(best_labels), k=k, inertia=best_inertia)


def spectral_cluster(w: WeightMatrix, k: int, seed: int,
                     skip_kernel: bool = False) -> ClusterAssignment:
    """Cluster a weighted graph into k groups via the spectral embedding."""
    emb = spectral_embed(w, k, skip_kernel=skip_kernel)
    return kmeans(emb.rows, k, seed)
