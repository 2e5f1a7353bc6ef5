"""PCA reduction and flat-kernel mean-shift for suspicious-buffer triage."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def pca_reduce(x: np.ndarray, n_components: int = 8) -> np.ndarray:
    """Project rows onto the top principal components (SVD on the centered
    matrix).  Signs are fixed so the largest-magnitude loading of each
    component is positive, keeping projections reproducible."""
    x = np.asarray(x, dtype=float)
    k = min(n_components, min(x.shape))
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:k]
    flip = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    flip[flip == 0] = 1.0
    return centered @ (comps * flip[:, None]).T


@dataclass
class ClusterReport:
    labels: np.ndarray
    centroids: np.ndarray
    sizes: np.ndarray
    largest_cluster_id: int
    far_cluster_ids: list = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)


def median_pairwise_distance(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 2:
        return 1.0
    diffs = x[:, None, :] - x[None, :, :]
    d = np.sqrt((diffs ** 2).sum(-1))
    return float(np.median(d[np.triu_indices(n, k=1)]))


def mean_shift(x: np.ndarray, bandwidth: float | None = None,
               tol: float = 1e-4, max_iter: int = 300,
               far_factor: float = 3.0) -> ClusterReport:
    """Flat-kernel mean-shift: every point ascends to the mean of its
    bandwidth neighborhood; converged modes closer than half a bandwidth
    merge into one cluster.

    Bandwidth defaults to the median pairwise distance of the batch.
    Clusters whose centroid sits further than far_factor times the median
    inter-centroid distance from every other centroid are flagged far.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot cluster an empty batch")
    if bandwidth is None:
        bandwidth = median_pairwise_distance(x)
    if bandwidth <= 0:
        bandwidth = 1.0

    modes = x.copy()
    for _ in range(max_iter):
        diffs = modes[:, None, :] - x[None, :, :]
        within = (diffs ** 2).sum(-1) <= bandwidth * bandwidth
        counts = within.sum(axis=1)
        counts[counts == 0] = 1
        new_modes = (within[:, :, None] * x[None, :, :]).sum(axis=1) / counts[:, None]
        move = np.sqrt(((new_modes - modes) ** 2).sum(-1)).max()
        modes = new_modes
        if move < tol:
            break

    # merge modes within bandwidth/2, assigning cluster ids by discovery order
    labels = -np.ones(n, dtype=int)
    centroids: list[np.ndarray] = []
    for i in range(n):
        assigned = False
        for cid, c in enumerate(centroids):
            if np.linalg.norm(modes[i] - c) <= bandwidth / 2.0:
                labels[i] = cid
                assigned = True
                break
        if not assigned:
            centroids.append(modes[i])
            labels[i] = len(centroids) - 1
    centroids_arr = np.stack([x[labels == cid].mean(axis=0)
                              for cid in range(len(centroids))])
    sizes = np.bincount(labels, minlength=len(centroids))
    largest = int(np.argmax(sizes))   # argmax takes the lowest id on ties

    far: list[int] = []
    if len(centroids) >= 2:
        d = np.sqrt(((centroids_arr[:, None, :] - centroids_arr[None, :, :]) ** 2).sum(-1))
        np.fill_diagonal(d, np.inf)
        nearest = d.min(axis=1)
        finite = nearest[np.isfinite(nearest)]
        med = float(np.median(finite)) if finite.size else 0.0
        if med > 0:
            far = [int(i) for i in np.where(nearest > far_factor * med)[0]]
    return ClusterReport(labels=labels, centroids=centroids_arr, sizes=sizes,
                         largest_cluster_id=largest, far_cluster_ids=far)
