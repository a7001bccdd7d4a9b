"""Differentially private k-means over clipped random Fourier features.

Noisy Lloyd iterations: records are embedded once, clipped to a bound
C_s (privately selected, or the a priori bound 1 in rbf_mode), and each
iteration releases per-cluster noisy counts and noisy feature sums from
which the next centers are formed.  Only noisy quantities leave the
routine; the final assignment pass is against noisy centers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import BinaryDataset
from .dpnorm import dp_norm
from .rff import FeatureMap, embed

# Fallback seed for center initialization when the caller supplies neither
# centers nor an init stream.  Public: independent of the data.
_DEFAULT_INIT_SEED = 271828


@dataclass(frozen=True)
class Clustering:
    """Result of one clustering run.

    ``noisy_sizes`` are the last iteration's noisy counts; they are the
    only size estimates safe to release.  ``size_history`` stacks the
    noisy counts of every iteration (iterations x k) for run logs.
    """

    assignments: np.ndarray
    noisy_centers: np.ndarray
    noisy_sizes: np.ndarray
    k: int
    iterations: int
    clip_bound: float
    size_history: np.ndarray

    def __post_init__(self):
        if (self.noisy_centers.shape[0] != self.k
                or self.noisy_sizes.shape[0] != self.k):
            raise ValueError("centers/sizes must have one row per cluster")


def clip_features(features: np.ndarray, c_s: float) -> np.ndarray:
    """Scale rows with norm above c_s back onto the c_s sphere."""
    if c_s <= 0:
        raise ValueError(f"clip bound must be positive, got {c_s}")
    features = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(features, axis=1)
    scale = np.maximum(1.0, norms / c_s)
    return features / scale[:, None]


def assign_to_centers(features: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Index of the nearest center per row; ties break toward the lower index."""
    d2 = ((features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def default_initial_centers(
    k: int, d: int, c_s: float, rng: np.random.Generator
) -> np.ndarray:
    """k pseudo-random unit vectors scaled to c_s.  Data-independent."""
    raw = rng.normal(0.0, 1.0, size=(k, d))
    return c_s * raw / np.linalg.norm(raw, axis=1)[:, None]


def dp_kernel_kmeans(
    dataset: BinaryDataset,
    fmap: FeatureMap,
    k: int,
    iterations: int,
    sigma_c: float,
    sigma_k: float,
    rng: np.random.Generator,
    *,
    init: np.ndarray | None = None,
    init_rng: np.random.Generator | None = None,
    rbf_mode: bool = True,
    c_max: float = 10.0,
    bins: int = 100,
) -> Clustering:
    """Cluster the embedded records with per-iteration Gaussian noise.

    sigma_k = 0 is a test-only mode that reproduces exact Lloyd
    iterations on the clipped features.  In rbf_mode the clip bound is
    the constant 1 and sigma_c is never used (no threshold selection).
    Empty clusters are re-noised around their previous center instead of
    being reseeded from data.
    """
    n = len(dataset)
    if k < 1 or k > n:
        raise ValueError(f"need 1 <= k <= {n}, got k={k}")
    if iterations < 1:
        raise ValueError(f"need at least one iteration, got {iterations}")
    if sigma_k < 0 or sigma_c < 0:
        raise ValueError("noise scales must be >= 0")

    features = embed(fmap, dataset.records)
    if rbf_mode:
        c_s = 1.0
    else:
        c_s = dp_norm(features, sigma_c, c_max=c_max, bins=bins, rng=rng)
    clipped = clip_features(features, c_s)

    if init is not None:
        centers = np.array(init, dtype=np.float64, copy=True)
        if centers.shape != (k, fmap.d):
            raise ValueError(
                f"init centers must have shape ({k}, {fmap.d}), got {centers.shape}"
            )
    else:
        if init_rng is None:
            init_rng = np.random.default_rng(_DEFAULT_INIT_SEED)
        centers = default_initial_centers(k, fmap.d, c_s, init_rng)

    root2 = np.sqrt(2.0)
    history = np.empty((iterations, k))
    for t in range(iterations):
        assign = assign_to_centers(clipped, centers)
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros((k, fmap.d))
        np.add.at(sums, assign, clipped)
        new_centers = np.empty_like(centers)
        for i in range(k):
            noisy_size = counts[i] + rng.normal(0.0, root2 * sigma_k)
            center_noise = rng.normal(0.0, root2 * c_s * sigma_k, size=fmap.d)
            divisor = max(noisy_size, 1.0)  # degenerate guard for tiny noisy counts
            if counts[i] == 0:
                new_centers[i] = centers[i] + center_noise / divisor
            else:
                new_centers[i] = (sums[i] + center_noise) / divisor
            history[t, i] = noisy_size
        centers = new_centers

    final_assign = assign_to_centers(clipped, centers)
    return Clustering(
        assignments=final_assign,
        noisy_centers=centers,
        noisy_sizes=history[-1].copy(),
        k=k,
        iterations=iterations,
        clip_bound=float(c_s),
        size_history=history,
    )
