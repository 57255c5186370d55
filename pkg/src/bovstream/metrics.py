"""Desk-scale sample statistics for generated frame sequences."""

from __future__ import annotations

import math

import numpy as np

from .diffusion import VarianceSchedule, alpha_bar_at, grid_level


def pixel_stats(frames: np.ndarray) -> tuple[float, float]:
    """Mean and variance pooled over all frames and pixels."""
    flat = frames.reshape(-1).astype(np.float64)
    return float(flat.mean()), float(flat.var())


def temporal_consistency(frames: np.ndarray) -> float:
    """Mean cosine similarity of adjacent frames."""
    sims = []
    for a, b in zip(frames[:-1], frames[1:]):
        fa = a.reshape(-1).astype(np.float64)
        fb = b.reshape(-1).astype(np.float64)
        na, nb = np.linalg.norm(fa), np.linalg.norm(fb)
        if na == 0.0 and nb == 0.0:
            sims.append(1.0)
        elif na == 0.0 or nb == 0.0:
            sims.append(0.0)
        else:
            sims.append(float(fa @ fb / (na * nb)))
    return float(np.mean(sims))


def dynamic_degree(frames: np.ndarray) -> float:
    """Mean absolute adjacent-frame difference."""
    diffs = np.abs(np.diff(frames.astype(np.float64), axis=0))
    return float(diffs.mean())


def transport_factor(s_level: float, t_level: float,
                     schedule: VarianceSchedule) -> float:
    """Scaling a self-predicting Gaussian pixel picks up stepping t -> s."""
    ab_s = alpha_bar_at(schedule, s_level)
    ab_t = alpha_bar_at(schedule, t_level)
    return math.sqrt(ab_s * ab_t) + math.sqrt((1.0 - ab_s) * (1.0 - ab_t))


def closed_form_output_variance(schedule: VarianceSchedule, L: int, n: int) -> float:
    """Variance of an emitted pixel when the analytic oracle drives the
    sampler on i.i.d. N(0,1) data: the product of squared transport
    factors along the full trajectory from T down to 0."""
    T = schedule.T
    var = 1.0
    for j in range(n * L, 0, -1):
        c = transport_factor(grid_level(j - 1, T, L, n), grid_level(j, T, L, n), schedule)
        var *= c * c
    return var
