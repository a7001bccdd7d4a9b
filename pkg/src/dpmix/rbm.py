"""Bernoulli restricted Boltzmann machine with persistent-chain gradients.

Energy of a joint state (v, h) with visible v in {0,1}^m and hidden h in
{0,1}^n:

    E(v, h) = -h' W v - b' v - c' h

where W is the (n, m) weight matrix, b the visible bias and c the hidden
bias.  Both conditionals factorize into logistic units.  Training
statistics follow persistent contrastive divergence: the model
expectation is estimated from Gibbs chains that persist across updates
and never see the current batch, so per-example gradients share one
negative term and differ only in their positive term.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass
class RbmModel:
    """Mutable parameter container; updates happen in place during training."""

    weights: np.ndarray  # (n_hidden, m)
    visible_bias: np.ndarray  # (m,)
    hidden_bias: np.ndarray  # (n_hidden,)

    @property
    def m(self) -> int:
        return int(self.weights.shape[1])

    @property
    def n_hidden(self) -> int:
        return int(self.weights.shape[0])

    @property
    def n_params(self) -> int:
        return self.weights.size + self.visible_bias.size + self.hidden_bias.size

    def __post_init__(self):
        n, m = self.weights.shape
        if self.visible_bias.shape != (m,) or self.hidden_bias.shape != (n,):
            raise ValueError("bias shapes do not match the weight matrix")


def init_model(
    m: int, n_hidden: int, rng: np.random.Generator, weight_std: float = 0.01
) -> RbmModel:
    """Small random weights, zero biases."""
    if m < 1 or n_hidden < 1:
        raise ValueError(f"dimensions must be >= 1, got m={m}, n_hidden={n_hidden}")
    return RbmModel(
        weights=rng.normal(0.0, weight_std, size=(n_hidden, m)),
        visible_bias=np.zeros(m),
        hidden_bias=np.zeros(n_hidden),
    )


def energy(model: RbmModel, v: np.ndarray, h: np.ndarray) -> float:
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    return float(-h @ model.weights @ v - model.visible_bias @ v - model.hidden_bias @ h)


def conditional_hidden(model: RbmModel, v: np.ndarray) -> np.ndarray:
    """p(h_i = 1 | v) for one record (1-D) or a stack (2-D)."""
    v = np.asarray(v, dtype=np.float64)
    return expit(model.hidden_bias + v @ model.weights.T)


def conditional_visible(model: RbmModel, h: np.ndarray) -> np.ndarray:
    """p(v_j = 1 | h) for one state (1-D) or a stack (2-D)."""
    h = np.asarray(h, dtype=np.float64)
    return expit(model.visible_bias + h @ model.weights)


def flatten_parameters(model: RbmModel) -> np.ndarray:
    """Parameter vector in declared order: W row-major, then b, then c."""
    return np.concatenate(
        [model.weights.ravel(), model.visible_bias, model.hidden_bias]
    )


def set_flat_parameters(model: RbmModel, vec: np.ndarray) -> None:
    """Inverse of flatten_parameters; writes the model in place."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (model.n_params,):
        raise ValueError(f"expected {model.n_params} parameters, got {vec.shape}")
    n, m = model.weights.shape
    model.weights = vec[: n * m].reshape(n, m).copy()
    model.visible_bias = vec[n * m : n * m + m].copy()
    model.hidden_bias = vec[n * m + m :].copy()


def positive_statistics(model: RbmModel, records: np.ndarray) -> np.ndarray:
    """Per-record sufficient statistics (p(h|x) x', x, p(h|x)), flattened.

    Rows align with flatten_parameters, so statistic differences are
    log-likelihood gradients.
    """
    x = np.asarray(records, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    p_h = conditional_hidden(model, x)  # (B, n)
    grad_w = np.einsum("bi,bj->bij", p_h, x).reshape(x.shape[0], -1)
    return np.concatenate([grad_w, x, p_h], axis=1)


@dataclass
class PersistentChains:
    """Gibbs chain states plus their private random stream.

    The states are a function of the parameter history and the chain
    seed only; batches never touch them.
    """

    states: np.ndarray  # (count, m) uint8
    rng: np.random.Generator

    @classmethod
    def initialize(cls, count: int, m: int, seed: int) -> "PersistentChains":
        if count < 1:
            raise ValueError(f"need at least one chain, got {count}")
        rng = np.random.default_rng(seed)
        states = (rng.random((count, m)) < 0.5).astype(np.uint8)
        return cls(states=states, rng=rng)

    def __len__(self) -> int:
        return int(self.states.shape[0])


def _gibbs_sweeps(
    model: RbmModel, states: np.ndarray, sweeps: int, rng: np.random.Generator
) -> np.ndarray:
    v = states.astype(np.float64)
    for _ in range(sweeps):
        p_h = conditional_hidden(model, v)
        h = (rng.random(p_h.shape) < p_h).astype(np.float64)
        p_v = conditional_visible(model, h)
        v = (rng.random(p_v.shape) < p_v).astype(np.float64)
    return v.astype(np.uint8)


def advance_chains(model: RbmModel, chains: PersistentChains, sweeps: int) -> None:
    """Run block Gibbs on every chain, in place."""
    chains.states = _gibbs_sweeps(model, chains.states, sweeps, chains.rng)


def negative_statistic(model: RbmModel, chains: PersistentChains) -> np.ndarray:
    """Model-side statistic: mean of positive_statistics over chain states."""
    return positive_statistics(model, chains.states).mean(axis=0)


def pcd_per_example_gradients(
    model: RbmModel, batch, chains: PersistentChains, gibbs_steps: int = 1
) -> np.ndarray:
    """Log-likelihood ascent gradients, one row per batch record.

    Advances the persistent chains by ``gibbs_steps`` sweeps, then
    returns positive(x) - N with the shared negative statistic N.  An
    empty batch returns an empty array and leaves the chains untouched.
    """
    records = batch.records if hasattr(batch, "records") else np.asarray(batch)
    if records.shape[0] == 0:
        return np.zeros((0, model.n_params))
    advance_chains(model, chains, gibbs_steps)
    neg = negative_statistic(model, chains)
    return positive_statistics(model, records) - neg


def sample_batch(
    model: RbmModel, count: int, gibbs_steps: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``count`` records: fair-coin start, then block Gibbs burn-in."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if gibbs_steps < 1:
        raise ValueError(f"gibbs_steps must be >= 1, got {gibbs_steps}")
    start = (rng.random((count, model.m)) < 0.5).astype(np.uint8)
    return _gibbs_sweeps(model, start, gibbs_steps, rng)


def sample(model: RbmModel, gibbs_steps: int, rng: np.random.Generator) -> np.ndarray:
    """One record from the model distribution."""
    return sample_batch(model, 1, gibbs_steps, rng)[0]
