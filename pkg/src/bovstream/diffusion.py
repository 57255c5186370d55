"""Variance schedules, forward noising, and deterministic reverse stepping.

The forward process is z_t = sqrt(abar(t)) z_0 + sqrt(1 - abar(t)) eps with
abar the cumulative product of (1 - beta). Reverse steps are deterministic
(eta = 0), transporting between arbitrary real-valued noise levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, OrderError, RangeError, ShapeError, SingularityError

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class VarianceSchedule:
    T: int
    beta: np.ndarray           # [T], linear beta_start..beta_end
    alpha: np.ndarray          # [T], 1 - beta
    alpha_bar: np.ndarray      # [T+1], alpha_bar[0] = 1, cumulative product
    log_alpha_bar: np.ndarray  # [T+1], log_alpha_bar[0] = 0


def build_schedule(T: int = DEFAULT_T, beta_start: float = DEFAULT_BETA_START,
                   beta_end: float = DEFAULT_BETA_END) -> VarianceSchedule:
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    # accumulate in extended precision so the tail of the product is exact
    log_alpha = np.log(alpha.astype(np.longdouble))
    log_alpha_bar = np.concatenate([
        np.zeros(1, dtype=np.longdouble), np.cumsum(log_alpha)
    ])
    alpha_bar = np.exp(log_alpha_bar).astype(np.float64)
    return VarianceSchedule(
        T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar,
        log_alpha_bar=log_alpha_bar.astype(np.float64),
    )


def alpha_bar_at(s: VarianceSchedule, t: float) -> float:
    """abar at a real-valued level: log-linear interpolation, exact at ints."""
    if not (0.0 <= t <= s.T):
        raise RangeError(f"level {t} outside [0, {s.T}]")
    lo = int(np.floor(t))
    if lo == t:
        return float(s.alpha_bar[lo])
    frac = t - lo
    log_ab = (1.0 - frac) * s.log_alpha_bar[lo] + frac * s.log_alpha_bar[lo + 1]
    return float(np.exp(log_ab))


def forward_noise(z0: np.ndarray, t: float, eps: np.ndarray,
                  s: VarianceSchedule) -> np.ndarray:
    """z_t = sqrt(abar) z_0 + sqrt(1 - abar) eps."""
    if z0.shape != eps.shape:
        raise ShapeError(f"z0 {z0.shape} vs eps {eps.shape}")
    ab = alpha_bar_at(s, t)
    # math.sqrt keeps the coefficients weak python floats so float32
    # frames stay float32 under NEP 50 promotion
    return math.sqrt(ab) * z0 + math.sqrt(1.0 - ab) * eps


def ddim_step(z_t: np.ndarray, eps_hat: np.ndarray, t_from: float, t_to: float,
              s: VarianceSchedule) -> np.ndarray:
    """Deterministic reverse transport from level t_from down to t_to.

    zhat0 = (z_t - sqrt(1 - abar_from) eps_hat) / sqrt(abar_from)
    out   = sqrt(abar_to) zhat0 + sqrt(1 - abar_to) eps_hat
    """
    if z_t.shape != eps_hat.shape:
        raise ShapeError(f"z_t {z_t.shape} vs eps_hat {eps_hat.shape}")
    if t_to > t_from:
        raise OrderError(f"t_to {t_to} > t_from {t_from}")
    if t_from == t_to:
        return z_t.copy()
    ab_from = alpha_bar_at(s, t_from)
    if ab_from == 0.0:
        raise SingularityError(f"alpha_bar({t_from}) = 0")
    ab_to = alpha_bar_at(s, t_to)
    zhat0 = (z_t - math.sqrt(1.0 - ab_from) * eps_hat) / math.sqrt(ab_from)
    if t_to == 0.0:
        return zhat0
    return math.sqrt(ab_to) * zhat0 + math.sqrt(1.0 - ab_to) * eps_hat


def grid_level(j: int, T: int, L: int, n: int) -> float:
    """Level j * T / (n L) of the refined sampling grid, computed one way
    everywhere so boundary levels compare exactly across iterations."""
    return (j * T) / (n * L)


def sampling_grid(T: int, L: int, n: int) -> list[float]:
    """The nL+1 uniformly spaced levels {0, T/(nL), ..., T}."""
    if L < 1 or n < 1:
        raise ConfigError(f"need L >= 1 and n >= 1, got L={L}, n={n}")
    return [grid_level(j, T, L, n) for j in range(n * L + 1)]
