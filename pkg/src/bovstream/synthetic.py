"""Synthetic video sources with known statistics, and the closed-form
optimal noise predictor that verifies the sampler without any training."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffusion import VarianceSchedule, alpha_bar_at
from .errors import ConfigError, RangeError
from .rng import consumer_rng


@dataclass
class Ar1Params:
    """Per-pixel AR(1) source: x_i = rho x_{i-1} + sqrt(1-rho^2) w.

    The stationary marginal is standard normal for any rho in [0, 1);
    rho = 0 gives i.i.d. frames.
    """
    rho: float = 0.0
    frame_shape: tuple[int, int, int] = (1, 16, 16)
    seed: int = 42

    def __post_init__(self):
        if not (0.0 <= self.rho < 1.0):
            raise ConfigError(f"rho must be in [0, 1), got {self.rho}")


def gen_ar1_video(params: Ar1Params, length: int,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """[length, c, h, w] float32 frames, stationary N(0,1) per pixel."""
    if length < 1:
        raise ConfigError(f"length must be >= 1, got {length}")
    rng = rng or consumer_rng(params.seed, "data")
    shape = params.frame_shape
    frames = np.empty((length,) + shape, dtype=np.float32)
    frames[0] = rng.standard_normal(shape, dtype=np.float32)
    scale = math.sqrt(1.0 - params.rho * params.rho)
    for i in range(1, length):
        w = rng.standard_normal(shape, dtype=np.float32)
        frames[i] = params.rho * frames[i - 1] + scale * w
    return frames


@dataclass
class MovingBarParams:
    frame_shape: tuple[int, int, int] = (1, 16, 16)
    bar_width: int = 3
    velocity: int = 1   # pixels per frame, integer, wraps around
    phase: int = 0

    def __post_init__(self):
        w = self.frame_shape[2]
        if not (1 <= self.bar_width <= w):
            raise ConfigError(f"bar_width {self.bar_width} outside [1, {w}]")


def gen_moving_bar_video(params: MovingBarParams, length: int) -> np.ndarray:
    """A bright vertical bar translating with wraparound, values in [0, 1]."""
    c, h, w = params.frame_shape
    base = np.zeros((c, h, w), dtype=np.float32)
    cols = (params.phase + np.arange(params.bar_width)) % w
    base[:, :, cols] = 1.0
    frames = np.empty((length, c, h, w), dtype=np.float32)
    for t in range(length):
        frames[t] = np.roll(base, params.velocity * t, axis=2)
    return frames


def analytic_eps(z_t: np.ndarray, t: float, schedule: VarianceSchedule) -> np.ndarray:
    """Bayes-optimal noise prediction for i.i.d. N(0,1) pixels.

    The marginal of z_t is N(0,1) and E[z0 | z_t] = sqrt(abar) z_t, so the
    optimal predictor is sqrt(1 - abar(t)) * z_t.
    """
    if t <= 0.0:
        raise RangeError("noise prediction undefined at level 0")
    ab = alpha_bar_at(schedule, t)
    return math.sqrt(1.0 - ab) * z_t


class OracleDenoiser:
    """Drop-in stand-in for a trained model; ignores the reference frame."""

    def __init__(self, schedule: VarianceSchedule):
        self.schedule = schedule

    def predict_eps(self, window: np.ndarray, levels: np.ndarray,
                    ref: np.ndarray | None) -> np.ndarray:
        out = np.empty_like(window)
        for i, t in enumerate(levels):
            out[i] = analytic_eps(window[i], float(t), self.schedule)
        return out


def oracle_denoiser_adapter(schedule: VarianceSchedule) -> OracleDenoiser:
    return OracleDenoiser(schedule)
