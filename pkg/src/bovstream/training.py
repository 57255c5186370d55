"""Training-time noise-level schedules, batch assembly, and the loop.

Three ways to assign the L per-slot noise levels of a training window:

  progressive  - the deterministic grid [T/L, 2T/L, ..., T]
  random       - i.i.d. uniform draws on [1, T]
  dist_aug     - the grid plus 0.4 * N(0,1) * T/L per entry, clamped to [1, T]

The loss is the mean squared error between predicted and drawn noise over
the L noised slots; the clean reference slot is conditioning only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .denoiser import StreamDenoiser
from .diffusion import VarianceSchedule, forward_noise
from .errors import ConfigError, DataError
from .nn import Adam
from .rng import consumer_rng
from .tensor import Tensor

SCHEDULE_KINDS = ("progressive", "random", "dist_aug")


@dataclass
class NoiseLevelVector:
    levels: np.ndarray  # [L] float64 in (0, T]
    kind: str


@dataclass
class TrainingBatch:
    reference: np.ndarray   # clean frame preceding the window
    targets: np.ndarray     # [L] clean frames
    eps: np.ndarray         # [L] standard-normal draws
    noised: np.ndarray      # [L] targets noised at the sampled levels
    levels: NoiseLevelVector


def progressive_levels(L: int, T: int) -> np.ndarray:
    return np.arange(1, L + 1, dtype=np.float64) * T / L


def sample_training_levels(kind: str, L: int, T: int,
                           rng: np.random.Generator | None = None) -> NoiseLevelVector:
    if L < 1 or T < 1:
        raise ConfigError(f"need L >= 1 and T >= 1, got {L}, {T}")
    if kind == "progressive":
        return NoiseLevelVector(progressive_levels(L, T), kind)
    if rng is None:
        raise ConfigError(f"schedule kind {kind!r} needs an rng")
    if kind == "random":
        return NoiseLevelVector(rng.uniform(1.0, T, size=L), kind)
    if kind == "dist_aug":
        disturbed = progressive_levels(L, T) + 0.4 * rng.standard_normal(L) * T / L
        return NoiseLevelVector(np.clip(disturbed, 1.0, T), kind)
    raise ConfigError(f"unknown schedule kind: {kind!r}")


def make_batch(video: np.ndarray, window_start: int, kind: str,
               rng: np.random.Generator, schedule: VarianceSchedule, L: int,
               levels: NoiseLevelVector | None = None,
               eps_rng: np.random.Generator | None = None) -> TrainingBatch:
    """Window of L frames after `window_start`, noised at sampled levels.

    The frame at window_start itself is the clean reference, standing in
    for the latest emitted frame of the inference loop. Pass `levels`
    and/or `eps_rng` to draw from dedicated streams.
    """
    if window_start < 0 or window_start + L + 1 > video.shape[0]:
        raise DataError(
            f"window [{window_start}, {window_start + L}] outside video of "
            f"length {video.shape[0]}")
    if levels is None:
        levels = sample_training_levels(kind, L, schedule.T, rng)
    reference = video[window_start]
    targets = video[window_start + 1: window_start + 1 + L]
    eps = (eps_rng or rng).standard_normal(targets.shape).astype(targets.dtype)
    noised = np.stack([
        forward_noise(targets[i], float(levels.levels[i]), eps[i], schedule)
        for i in range(L)
    ])
    return TrainingBatch(reference=reference, targets=targets, eps=eps,
                         noised=noised, levels=levels)


def training_loss(model: StreamDenoiser, batch: TrainingBatch) -> Tensor:
    """Mean over the L noised slots and all elements of |eps_hat - eps|^2."""
    eps_hat = model.forward(
        Tensor(batch.noised, dtype=model.dtype),
        batch.levels.levels,
        Tensor(batch.reference, dtype=model.dtype),
    )
    diff = eps_hat - Tensor(batch.eps, dtype=model.dtype)
    sq = diff * diff
    return T.mean_over_axes(sq, tuple(range(sq.ndim)))


@dataclass
class TrainConfig:
    steps: int = 500
    kind: str = "dist_aug"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 42
    grad_accum: int = 1

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"unknown schedule kind: {self.kind!r}")
        if self.grad_accum < 1:
            raise ConfigError("grad_accum must be >= 1")


def train(model: StreamDenoiser, dataset: np.ndarray, cfg: TrainConfig,
          schedule: VarianceSchedule,
          callback=None) -> list[float]:
    """Noise-prediction training on windows drawn from `dataset`.

    Returns the per-step loss history; fully deterministic given the seed.
    """
    L = model.cfg.window
    if dataset.shape[0] < L + 1:
        raise DataError(f"dataset has {dataset.shape[0]} frames, need >= {L + 1}")
    rng_eps = consumer_rng(cfg.seed, "train_eps")
    rng_levels = consumer_rng(cfg.seed, "train_levels")
    rng_batch = consumer_rng(cfg.seed, "train_batch")
    opt = Adam(model.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2),
               eps=cfg.adam_eps)
    max_start = dataset.shape[0] - (L + 1)

    history: list[float] = []
    for step in range(cfg.steps):
        opt.zero_grad()
        losses = []
        for _ in range(cfg.grad_accum):
            start = int(rng_batch.integers(0, max_start + 1))
            levels = sample_training_levels(cfg.kind, L, schedule.T, rng_levels)
            batch = make_batch(dataset, start, cfg.kind, rng_eps, schedule, L,
                               levels=levels)
            loss = training_loss(model, batch)
            (loss * (1.0 / cfg.grad_accum)).backward()
            losses.append(loss.item())
        opt.step()
        history.append(float(np.mean(losses)))
        if callback is not None:
            callback(step, history[-1])
    return history
