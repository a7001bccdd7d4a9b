"""Random Fourier feature embedding for the Gaussian RBF kernel.

z(x) = sqrt(2/d) * cos(W x + b) with the rows of W drawn from the
kernel's spectral density N(0, 2*gamma*I) and phases b uniform on
[0, 2*pi) approximates kernel evaluations by inner products:

    <z(x), z(y)>  ~=  exp(-gamma * ||x - y||^2)

with error O(1/sqrt(d)).  The embedding satisfies E[||z(x)||] <= 1, so
clustering in feature space can use the fixed clip bound 1 without
spending privacy budget on threshold selection.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FeatureMap:
    """Frozen random projection; the same map must embed every record of a run."""

    w: np.ndarray  # (d, m) frequency matrix, rows ~ N(0, 2*gamma*I)
    b: np.ndarray  # (d,) phases in [0, 2*pi)
    gamma: float
    seed: int | None = None  # recorded when built via feature_map_from_seed

    @property
    def d(self) -> int:
        return int(self.w.shape[0])

    @property
    def m(self) -> int:
        return int(self.w.shape[1])


def sample_feature_map(m: int, d: int, gamma: float, rng: np.random.Generator) -> FeatureMap:
    """Draw a d-dimensional feature map for m-dimensional inputs."""
    if m < 1 or d < 1:
        raise ValueError(f"dimensions must be >= 1, got m={m}, d={d}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    w = rng.normal(0.0, np.sqrt(2.0 * gamma), size=(d, m))
    b = rng.uniform(0.0, 2.0 * np.pi, size=d)
    w.flags.writeable = False
    b.flags.writeable = False
    return FeatureMap(w=w, b=b, gamma=float(gamma))


def feature_map_from_seed(m: int, d: int, gamma: float, seed: int) -> FeatureMap:
    """Rebuildable map: the seed plus dimensions fully determine it."""
    fmap = sample_feature_map(m, d, gamma, np.random.default_rng(seed))
    return FeatureMap(w=fmap.w, b=fmap.b, gamma=fmap.gamma, seed=int(seed))


def embed(fmap: FeatureMap, x: np.ndarray) -> np.ndarray:
    """Embed one record (1-D) or a stack of records (2-D, one per row)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != fmap.m:
        raise ValueError(f"record dimension {x.shape[-1]} does not match map m={fmap.m}")
    return np.sqrt(2.0 / fmap.d) * np.cos(x @ fmap.w.T + fmap.b)


def kernel_rbf(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    """exp(-gamma * ||x - y||^2), the kernel the embedding approximates."""
    diff = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.exp(-gamma * np.dot(diff, diff)))
