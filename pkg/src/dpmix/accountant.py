"""Moments accountant for Gaussian and subsampled-Gaussian mechanisms.

Tracks alpha(lam) = log E[exp(lam * privacy_loss)] per mechanism,
composes across iterations additively, and converts the composite to an
(epsilon, delta) guarantee via the Chernoff bound

    epsilon = min over integer lam in [1, lambda_max] of
              (alpha_total(lam) - log(delta)) / lam.

Two closed-form conventions exist for the plain Gaussian mechanism.  The
default, (lam^2 + lam) / (4 sigma^2), reproduces the operating points the
shipped defaults were calibrated against; ``strict_gaussian`` selects
lam * (lam + 1) / (2 sigma^2), the exact log-MGF of the Gaussian privacy
loss at sensitivity-to-noise ratio 1/sigma.  The subsampled mechanism is
always evaluated by numerical quadrature of the two likelihood-ratio
integrals and is unaffected by the flag.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import NumericsError

DEFAULT_LAMBDA_MAX = 32

# Weight splits (j1, 1 - j1) searched when two mechanisms observe the same
# batch inside one iteration.  Small j1 shifts budget toward the second
# mechanism; the lone 0.9 entry covers the opposite regime.
DEFAULT_J1_GRID = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.90)

_QUAD_START_INTERVALS = 2**12
_QUAD_MAX_INTERVALS = 2**22
_QUAD_RTOL = 1e-8
_QUAD_ATOL = 1e-12


@dataclass(frozen=True)
class PrivacyConfig:
    """Noise scales and iteration counts of one full training run.

    Noise scales are multipliers on sensitivity: a mechanism with L2
    sensitivity s adds Gaussian noise of standard deviation s * sigma.
    ``q`` is the per-record batch inclusion probability of one SGD
    iteration.  ``rbf_mode`` marks feature embeddings with a known a
    priori norm bound, in which case clustering spends no budget on
    threshold selection.
    """

    sigma_c: float
    sigma_k: float
    sigma_g: float
    q: float
    t_kmeans: int
    t_sgd: int
    delta: float
    rbf_mode: bool = True
    lambda_max: int = DEFAULT_LAMBDA_MAX
    strict_gaussian: bool = False

    def __post_init__(self):
        for name in ("sigma_c", "sigma_k", "sigma_g"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must be in [0, 1], got {self.q}")
        if self.t_kmeans < 0 or self.t_sgd < 0:
            raise ValueError("iteration counts must be non-negative")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.lambda_max < 1:
            raise ValueError("lambda_max must be >= 1")


@dataclass(frozen=True)
class AlphaProfile:
    """Log-MGF of the total privacy loss on an integer grid of orders."""

    lambdas: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.lambdas) != len(self.values):
            raise ValueError("lambdas and values must have equal length")

    def to_dict(self) -> dict:
        return {"lambda": list(self.lambdas), "alpha": list(self.values)}


def alpha_gaussian(lam: float, sigma: float, strict: bool = False) -> float:
    """Per-invocation log-MGF bound for the Gaussian mechanism."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    value = (lam**2 + lam) / (4.0 * sigma**2)
    return 2.0 * value if strict else value


def _log_simpson_weights(n_intervals: int, step: float) -> np.ndarray:
    w = np.full(n_intervals + 1, 2.0)
    w[1::2] = 4.0
    w[0] = 1.0
    w[-1] = 1.0
    return w * (step / 3.0)


def _log_e1_e2(lam: float, sigma: float, q: float, n_intervals: int) -> tuple[float, float]:
    """Composite-Simpson estimates of log E1 and log E2 on one grid.

    E1 integrates mu0 * (mu0 / mu1)^lam, E2 integrates mu1 * (mu1 / mu0)^lam,
    where mu0 is the N(0, sigma) density and mu1 the q-mixture of mu0 with
    its unit shift.  Everything stays in log space: the E2 integrand peaks
    near x = lam + 1 with height exp(lam * (lam + 1) / (2 sigma^2)), far
    beyond float range for moderate lam.  The window is widened with lam
    for the same reason; a fixed window would silently truncate that peak.
    """
    pad = max(20.0 * sigma, 20.0)
    lo = -(lam + pad)
    hi = 1.0 + lam + pad
    x = np.linspace(lo, hi, n_intervals + 1)
    step = (hi - lo) / n_intervals
    norm = -math.log(sigma * math.sqrt(2.0 * math.pi))
    log_g0 = -(x**2) / (2.0 * sigma**2) + norm
    log_g1 = -((x - 1.0) ** 2) / (2.0 * sigma**2) + norm
    log_q = math.log(q) if q > 0 else -math.inf
    log_1mq = math.log1p(-q) if q < 1 else -math.inf
    log_mu0 = log_g0
    log_mu1 = np.logaddexp(log_1mq + log_g0, log_q + log_g1)
    log_ratio = log_mu0 - log_mu1
    weights = _log_simpson_weights(n_intervals, step)
    log_e1 = float(logsumexp(log_mu0 + lam * log_ratio, b=weights))
    log_e2 = float(logsumexp(log_mu1 - lam * log_ratio, b=weights))
    return log_e1, log_e2


def alpha_subsampled_gaussian(
    lam: float,
    sigma: float,
    q: float,
    *,
    rtol: float = _QUAD_RTOL,
    start_intervals: int = _QUAD_START_INTERVALS,
    max_intervals: int = _QUAD_MAX_INTERVALS,
) -> float:
    """log max(E1, E2) for the Poisson-subsampled Gaussian mechanism.

    The node count doubles until successive Simpson estimates agree to
    ``rtol``; failure to converge raises NumericsError rather than
    returning a truncated value.  ``lam`` may be non-integer.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    if q == 0.0:
        return 0.0
    return _alpha_subsampled_cached(
        float(lam), float(sigma), float(q), float(rtol), int(start_intervals), int(max_intervals)
    )


@lru_cache(maxsize=None)
def _alpha_subsampled_cached(
    lam: float,
    sigma: float,
    q: float,
    rtol: float,
    start_intervals: int,
    max_intervals: int,
) -> float:
    n = start_intervals
    prev = None
    while n <= max_intervals:
        log_e1, log_e2 = _log_e1_e2(lam, sigma, q, n)
        value = max(log_e1, log_e2)
        if prev is not None and abs(value - prev) <= rtol * abs(value) + _QUAD_ATOL:
            return max(value, 0.0)
        prev = value
        n *= 2
    raise NumericsError(
        f"subsampled-Gaussian quadrature did not converge for "
        f"lam={lam}, sigma={sigma}, q={q} within {max_intervals} intervals"
    )


def alpha_kmeans(lam: float, cfg: PrivacyConfig) -> float:
    """Total clustering log-MGF after t_kmeans noisy iterations.

    Each iteration releases a noisy cluster size (sensitivity sqrt(2),
    scale sqrt(2) * sigma_k) and a noisy feature sum (sensitivity
    sqrt(2) * C_s, scale sqrt(2) * C_s * sigma_k).  Outside rbf_mode one
    threshold selection at scale sigma_c is charged per iteration as well.
    """
    if cfg.t_kmeans == 0:
        return 0.0
    per_iter = 2.0 * alpha_gaussian(lam, cfg.sigma_k, cfg.strict_gaussian)
    if not cfg.rbf_mode:
        per_iter += alpha_gaussian(lam, cfg.sigma_c, cfg.strict_gaussian)
    return cfg.t_kmeans * per_iter


def _validate_j_grid(j_grid: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    grid = [(float(j1), float(j2)) for j1, j2 in j_grid]
    if not grid:
        raise ValueError("j_grid must be non-empty")
    for j1, j2 in grid:
        if j1 <= 0 or j2 <= 0 or abs(j1 + j2 - 1.0) > 1e-9:
            raise ValueError(f"invalid split ({j1}, {j2}): need j1, j2 > 0 and j1 + j2 = 1")
    return grid


def default_j_grid() -> list[tuple[float, float]]:
    return [(j1, 1.0 - j1) for j1 in DEFAULT_J1_GRID]


def sgd_step_alpha(
    lam: float, cfg: PrivacyConfig, j_grid: Iterable[tuple[float, float]] | None = None
) -> float:
    """Per-iteration SGD log-MGF, minimised over budget splits.

    One iteration runs two subsampled mechanisms on the same batch:
    threshold selection at scale sigma_c and the noisy gradient at scale
    sigma_g.  Their joint moment is bounded by
    j1 * alpha(lam / j1, sigma_c) + j2 * alpha(lam / j2, sigma_g) for any
    split j1 + j2 = 1, and the split grid is searched for the tightest.
    """
    if cfg.q == 0.0:
        return 0.0
    grid = _validate_j_grid(j_grid if j_grid is not None else default_j_grid())
    best = math.inf
    for j1, j2 in grid:
        a = j1 * alpha_subsampled_gaussian(lam / j1, cfg.sigma_c, cfg.q)
        a += j2 * alpha_subsampled_gaussian(lam / j2, cfg.sigma_g, cfg.q)
        best = min(best, a)
    return best


def alpha_sgd(
    lam: float, cfg: PrivacyConfig, j_grid: Iterable[tuple[float, float]] | None = None
) -> float:
    """Total SGD log-MGF after t_sgd iterations."""
    if cfg.t_sgd == 0:
        return 0.0
    return cfg.t_sgd * sgd_step_alpha(lam, cfg, j_grid)


def total_alpha_profile(
    cfg: PrivacyConfig, j_grid: Iterable[tuple[float, float]] | None = None
) -> AlphaProfile:
    """alpha_kmeans + alpha_sgd on the integer orders 1..lambda_max."""
    lams = tuple(range(1, cfg.lambda_max + 1))
    values = tuple(alpha_kmeans(l, cfg) + alpha_sgd(l, cfg, j_grid) for l in lams)
    return AlphaProfile(lambdas=lams, values=values)


def _minimise_epsilon(
    lambdas: Sequence[int], alphas: Sequence[float], delta: float
) -> tuple[float, int]:
    log_delta = math.log(delta)
    best_eps = math.inf
    best_lam = lambdas[0]
    for lam, alpha in zip(lambdas, alphas):
        eps = (alpha - log_delta) / lam
        if eps < best_eps:
            best_eps = eps
            best_lam = lam
    return float(best_eps), int(best_lam)


def epsilon_for_delta(
    cfg: PrivacyConfig, j_grid: Iterable[tuple[float, float]] | None = None
) -> tuple[float, int]:
    """Tightest (epsilon, argmin lambda) for the configured run."""
    profile = total_alpha_profile(cfg, j_grid)
    return _minimise_epsilon(profile.lambdas, profile.values, cfg.delta)


def epoch_iterations(q: float) -> int:
    """Iterations per epoch: ceil(1/q), so one epoch touches each record once in expectation."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0, 1], got {q}")
    return math.ceil(1.0 / q)


@dataclass(frozen=True)
class EpochEpsilon:
    epoch: int
    t_sgd: int
    epsilon: float
    argmin_lambda: int


def epsilon_schedule(
    cfg: PrivacyConfig,
    epochs: Iterable[int],
    j_grid: Iterable[tuple[float, float]] | None = None,
) -> list[EpochEpsilon]:
    """Epsilon after each epoch count; cfg.t_sgd is ignored.

    The per-iteration SGD alpha does not depend on the iteration count,
    so the whole schedule costs one quadrature sweep.
    """
    lams = tuple(range(1, cfg.lambda_max + 1))
    a_kmeans = np.array([alpha_kmeans(l, cfg) for l in lams])
    a_step = np.array([sgd_step_alpha(l, cfg, j_grid) for l in lams])
    per_epoch = epoch_iterations(cfg.q)
    out = []
    for e in epochs:
        if e < 0:
            raise ValueError("epoch counts must be non-negative")
        t_sgd = e * per_epoch
        eps, lam = _minimise_epsilon(lams, a_kmeans + t_sgd * a_step, cfg.delta)
        out.append(EpochEpsilon(epoch=e, t_sgd=t_sgd, epsilon=eps, argmin_lambda=lam))
    return out
