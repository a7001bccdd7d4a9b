"""End-to-end pipeline: private clustering, one RBM per cluster, sampling.

Training-time cluster selection uses the true partition sizes; those are
internal and never serialized.  Everything written into the released
model is a function of noisy, differentially private quantities: noisy
cluster sizes (clamped to be non-negative) become the mixture weights,
and the stored epsilon is recomputed from the exact iteration counts and
noise scales that were executed.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rbm
from .accountant import (
    DEFAULT_LAMBDA_MAX,
    PrivacyConfig,
    epoch_iterations,
    epsilon_for_delta,
)
from .data import BinaryDataset, make_dataset, subset
from .dpsgd import SgdConfig, StepInfo, dp_sgd_step
from .errors import ConfigError, DataError, StageError
from .kmeans import Clustering, dp_kernel_kmeans
from .rff import FeatureMap, feature_map_from_seed
from .streams import child_rng, child_seed

MODEL_FORMAT_VERSION = 1
DEFAULT_GENERATION_SWEEPS = 500


@dataclass(frozen=True)
class TrainConfig:
    """Everything train() needs beyond the dataset and the master seed."""

    k: int
    epochs: int
    batch_size: int
    sigma_c: float
    sigma_k: float
    sigma_g: float
    t_kmeans: int = 20
    d: int = 200
    gamma: float = 1.0
    n_hidden: int = 200
    eta: float = 0.01
    pcd_sweeps: int = 1
    chain_count: int | None = None  # defaults to batch_size
    c_max: float = 10.0
    bins: int = 100
    delta: float | None = None  # defaults to 1 / |dataset|
    rbf_mode: bool = True
    strict_gaussian: bool = False
    lambda_max: int = DEFAULT_LAMBDA_MAX
    init_centers: np.ndarray | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if min(self.sigma_c, self.sigma_k, self.sigma_g) < 0:
            raise ConfigError("noise scales must be >= 0 (0 only in unsafe test mode)")


@dataclass
class MixtureModel:
    """The released artifact: k generative models plus DP mixture weights."""

    m: int
    k: int
    models: list[rbm.RbmModel]
    weights: np.ndarray
    feature_map: FeatureMap
    centers: np.ndarray
    privacy: PrivacyConfig | None
    epsilon: float
    argmin_lambda: int | None


@dataclass(frozen=True)
class StepLog:
    step: int
    cluster: int
    info: StepInfo

    def to_dict(self) -> dict:
        d = {"step": self.step, "cluster": self.cluster}
        d.update(asdict(self.info))
        return d


@dataclass
class TrainResult:
    mixture: MixtureModel
    clustering: Clustering
    steps: list[StepLog]
    t_sgd: int
    q: float


def train(dataset: BinaryDataset, cfg: TrainConfig, master_seed: int) -> TrainResult:
    """Full private training run, deterministic in (dataset, cfg, master_seed).

    Child random streams, by name: "feature-map", "kmeans-init",
    "kmeans-noise", "model-init", "chains-<i>", "selection",
    "sgd-sampling", "sgd-noise".  Any stage can be replayed by rebuilding
    its stream from the master seed.
    """
    n = len(dataset)
    if cfg.batch_size > n:
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds dataset size {n}")
    q = cfg.batch_size / n
    t_sgd = cfg.epochs * epoch_iterations(q)
    delta = cfg.delta if cfg.delta is not None else 1.0 / n

    unsafe = min(cfg.sigma_c, cfg.sigma_k, cfg.sigma_g) == 0
    privacy = None
    epsilon = math.inf
    argmin_lambda = None
    if not unsafe:
        try:
            privacy = PrivacyConfig(
                sigma_c=cfg.sigma_c,
                sigma_k=cfg.sigma_k,
                sigma_g=cfg.sigma_g,
                q=q,
                t_kmeans=cfg.t_kmeans,
                t_sgd=t_sgd,
                delta=delta,
                rbf_mode=cfg.rbf_mode,
                lambda_max=cfg.lambda_max,
                strict_gaussian=cfg.strict_gaussian,
            )
            epsilon, argmin_lambda = epsilon_for_delta(privacy)
        except (ValueError, ArithmeticError) as exc:
            raise StageError("accounting", str(exc)) from exc
        if not math.isfinite(epsilon):
            raise StageError("accounting", "epsilon is not finite for this configuration")

    try:
        fmap = feature_map_from_seed(
            dataset.m, cfg.d, cfg.gamma, child_seed(master_seed, "feature-map")
        )
    except ValueError as exc:
        raise StageError("feature-map", str(exc)) from exc

    try:
        clustering = dp_kernel_kmeans(
            dataset,
            fmap,
            cfg.k,
            cfg.t_kmeans,
            cfg.sigma_c,
            cfg.sigma_k,
            child_rng(master_seed, "kmeans-noise"),
            init=cfg.init_centers,
            init_rng=child_rng(master_seed, "kmeans-init"),
            rbf_mode=cfg.rbf_mode,
            c_max=cfg.c_max,
            bins=cfg.bins,
        )
    except ValueError as exc:
        raise StageError("clustering", str(exc)) from exc

    # True partition: training-internal only, never released.
    clusters = [
        subset(dataset, np.flatnonzero(clustering.assignments == i))
        for i in range(cfg.k)
    ]
    true_sizes = np.array([len(c) for c in clusters], dtype=np.float64)
    selection_probs = true_sizes / true_sizes.sum()

    init_rng = child_rng(master_seed, "model-init")
    models = [init_model_for(dataset.m, cfg, init_rng) for _ in range(cfg.k)]
    chain_count = cfg.chain_count if cfg.chain_count is not None else cfg.batch_size
    chains = [
        rbm.PersistentChains.initialize(
            chain_count, dataset.m, child_seed(master_seed, f"chains-{i}")
        )
        for i in range(cfg.k)
    ]

    sgd_cfg = SgdConfig(
        sigma_c=cfg.sigma_c,
        sigma_g=cfg.sigma_g,
        batch_size=cfg.batch_size,
        eta=cfg.eta,
        c_max=cfg.c_max,
        bins=cfg.bins,
    )
    selection_rng = child_rng(master_seed, "selection")
    sample_rng = child_rng(master_seed, "sgd-sampling")
    noise_rng = child_rng(master_seed, "sgd-noise")

    def make_grad_fn(idx: int):
        def grad_fn(batch):
            ascent = rbm.pcd_per_example_gradients(
                models[idx], batch, chains[idx], cfg.pcd_sweeps
            )
            return -ascent  # descent on the negative log-likelihood

        return grad_fn

    grad_fns = [make_grad_fn(i) for i in range(cfg.k)]
    prev_clip: list[float | None] = [None] * cfg.k
    steps: list[StepLog] = []
    try:
        for t in range(t_sgd):
            s = int(selection_rng.choice(cfg.k, p=selection_probs))
            params = rbm.flatten_parameters(models[s])
            new_params, info = dp_sgd_step(
                params,
                grad_fns[s],
                clusters[s],
                sgd_cfg,
                sample_rng,
                noise_rng,
                prev_clip=prev_clip[s],
            )
            rbm.set_flat_parameters(models[s], new_params)
            prev_clip[s] = info.clip_bound
            steps.append(StepLog(step=t, cluster=s, info=info))
    except ValueError as exc:
        raise StageError("sgd", str(exc)) from exc

    weights = np.clip(clustering.noisy_sizes, 0.0, None)
    mixture = MixtureModel(
        m=dataset.m,
        k=cfg.k,
        models=models,
        weights=weights,
        feature_map=fmap,
        centers=clustering.noisy_centers,
        privacy=privacy,
        epsilon=epsilon,
        argmin_lambda=argmin_lambda,
    )
    return TrainResult(
        mixture=mixture, clustering=clustering, steps=steps, t_sgd=t_sgd, q=q
    )


def init_model_for(m: int, cfg: TrainConfig, rng: np.random.Generator) -> rbm.RbmModel:
    return rbm.init_model(m, cfg.n_hidden, rng)


def generate(
    mixture: MixtureModel,
    count: int,
    rng: np.random.Generator,
    gibbs_steps: int = DEFAULT_GENERATION_SWEEPS,
) -> BinaryDataset:
    """Sample ``count`` records; component choice follows the DP weights.

    Generated records may be all-zero; consumers must tolerate that.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    total = mixture.weights.sum()
    if total <= 0:
        raise DataError(
            "all mixture weights are zero; the model is degenerate and cannot "
            "be sampled (noisy cluster sizes were all non-positive)"
        )
    probs = mixture.weights / total
    assignment = rng.choice(mixture.k, size=count, p=probs)
    out = np.zeros((count, mixture.m), dtype=np.uint8)
    for i in range(mixture.k):
        idx = np.flatnonzero(assignment == i)
        if idx.size:
            out[idx] = rbm.sample_batch(mixture.models[i], idx.size, gibbs_steps, rng)
    return make_dataset(out, allow_empty=True)


def _privacy_dict(mix: MixtureModel) -> dict:
    if mix.privacy is None:
        return {"epsilon": None, "unsafe_no_privacy": True}
    d = asdict(mix.privacy)
    d["epsilon"] = mix.epsilon
    d["argmin_lambda"] = mix.argmin_lambda
    return d


def save_model(mix: MixtureModel, path, config_echo: dict | None = None) -> None:
    """Serialize to JSON.  The feature map is stored as seed plus shape."""
    if mix.feature_map.seed is None:
        raise ValueError("only seed-built feature maps can be serialized")
    payload = {
        "version": MODEL_FORMAT_VERSION,
        "m": mix.m,
        "k": mix.k,
        "d": mix.feature_map.d,
        "gamma": mix.feature_map.gamma,
        "feature_map_seed": mix.feature_map.seed,
        "centers": mix.centers.tolist(),
        "weights": mix.weights.tolist(),
        "models": [
            {
                "weights": model.weights.tolist(),
                "visible_bias": model.visible_bias.tolist(),
                "hidden_bias": model.hidden_bias.tolist(),
            }
            for model in mix.models
        ],
        "privacy": _privacy_dict(mix),
    }
    if config_echo is not None:
        payload["config_echo"] = config_echo
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_model(path) -> MixtureModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model format version {payload.get('version')!r}")
    models = [
        rbm.RbmModel(
            weights=np.array(entry["weights"], dtype=np.float64),
            visible_bias=np.array(entry["visible_bias"], dtype=np.float64),
            hidden_bias=np.array(entry["hidden_bias"], dtype=np.float64),
        )
        for entry in payload["models"]
    ]
    fmap = feature_map_from_seed(
        payload["m"], payload["d"], payload["gamma"], payload["feature_map_seed"]
    )
    priv = payload["privacy"]
    privacy = None
    epsilon = math.inf
    argmin_lambda = None
    if not priv.get("unsafe_no_privacy"):
        epsilon = priv["epsilon"]
        argmin_lambda = priv["argmin_lambda"]
        privacy = PrivacyConfig(
            sigma_c=priv["sigma_c"],
            sigma_k=priv["sigma_k"],
            sigma_g=priv["sigma_g"],
            q=priv["q"],
            t_kmeans=priv["t_kmeans"],
            t_sgd=priv["t_sgd"],
            delta=priv["delta"],
            rbf_mode=priv["rbf_mode"],
            lambda_max=priv["lambda_max"],
            strict_gaussian=priv["strict_gaussian"],
        )
    return MixtureModel(
        m=payload["m"],
        k=payload["k"],
        models=models,
        weights=np.array(payload["weights"], dtype=np.float64),
        feature_map=fmap,
        centers=np.array(payload["centers"], dtype=np.float64),
        privacy=privacy,
        epsilon=epsilon,
        argmin_lambda=argmin_lambda,
    )
