"""Per-shape optimization loop: Adam over the weighted objective.

One run overfits one network to one shape. Batches, dropout and
initialization all derive from a single seed through independent
SeedSequence children, and gradients reduce in a fixed order, so a run is
bitwise reproducible in 64-bit mode.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import autodiff as ad
from . import field_net
from .losses import LossWeights, total_graph
from .sampler import SamplerConfig, make_batch
from .shape_data import LabeledPointCloud

__all__ = ["TrainConfig", "AdamState", "TrainingError", "adam_step", "fit"]


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss, bad configuration)."""


@dataclass
class TrainConfig:
    learning_rate: float = 5e-5
    iterations: int = 10000
    epochs: int = 10
    seed: int = 0
    weights: LossWeights = dataclass_field(default_factory=LossWeights)
    sampler: SamplerConfig = dataclass_field(default_factory=SamplerConfig)
    head_variant: str = "relu"
    num_parts: int = 2
    trunk_width: int = 256
    dtype: str = "float64"
    checkpoint_every: int = 0
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be 'float64' or 'float32'")


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the parameter dict."""

    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def _ensure_finite(report, iteration: int) -> None:
    for name, value in report.as_dict().items():
        if name != "odw_skipped" and not np.isfinite(value):
            raise TrainingError(f"non-finite loss term '{name}' at iteration {iteration}")


def adam_step(params: dict, grads: dict, state: AdamState, lr: float):
    """One bias-corrected Adam update, in place, fixed parameter order."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def fit(cloud: LabeledPointCloud, config: TrainConfig):
    """Optimize a fresh network on a normalized labeled cloud.

    Returns (network, log) where log holds one dict per iteration with the
    loss terms and wall time. Raises :class:`TrainingError`, naming the
    offending term, the first time any term turns non-finite.
    """
    if len(cloud) == 0:
        raise ValueError("cannot fit an empty cloud")
    if np.abs(cloud.points).max() > 1.0 + 1e-9:
        raise ValueError("cloud must be normalized into [-1, 1]^3 before fitting")
    if config.weights.lam_seg > 0 and cloud.num_parts < 1:
        warnings.warn("cloud has no labels; segmentation term disabled")

    dtype = np.dtype(config.dtype)
    ss = np.random.SeedSequence(config.seed)
    init_ss, run_ss = ss.spawn(2)
    net = field_net.init(
        config.head_variant,
        config.num_parts,
        seed=init_ss,
        trunk_width=config.trunk_width,
        dtype=dtype,
    )
    state = AdamState.for_params(net.params)
    iter_seeds = run_ss.generate_state(2 * max(config.iterations, 1), dtype=np.uint32)

    log = []
    for it in range(config.iterations):
        t0 = time.perf_counter()
        batch = make_batch(cloud, config.sampler, seed=int(iter_seeds[2 * it]))
        dropout_rng = np.random.default_rng(int(iter_seeds[2 * it + 1]))
        report, total, params_t = total_graph(
            net, batch, config.weights, training=True, rng=dropout_rng
        )
        _ensure_finite(report, it)
        ad.backward(total)
        grads = {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in params_t.items()
        }
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingError(
                    f"non-finite gradient for '{name}' at iteration {it} (diverged)"
                )
        adam_step(net.params, grads, state, config.learning_rate)
        entry = {"iteration": it, "epoch": it * config.epochs // max(config.iterations, 1)}
        entry.update(report.as_dict())
        entry["wall_time"] = time.perf_counter() - t0
        log.append(entry)
        if (
            config.checkpoint_every > 0
            and config.checkpoint_path
            and (it + 1) % config.checkpoint_every == 0
        ):
            field_net.save_checkpoint(net, config.checkpoint_path)
    return net, log
