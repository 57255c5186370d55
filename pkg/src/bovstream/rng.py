"""Deterministic random streams.

One u64 seed drives every random draw in the package. Each consumer gets
its own counter-based Philox stream so components can be tested in
isolation without perturbing each other's draws.
"""

from __future__ import annotations

import numpy as np

# Stable consumer ids; never reorder, only append.
_CONSUMERS = {
    "init_noise": 0,     # progressive noising of the conditioning frames
    "append_noise": 1,   # pure-noise frames appended by the stream loop
    "train_eps": 2,      # per-batch target noise draws
    "train_levels": 3,   # stochastic training noise-level schedules
    "train_batch": 4,    # window-start selection during training
    "data": 5,           # synthetic video generation
    "model_init": 6,     # weight initialization
}


def consumer_rng(seed: int, consumer: str) -> np.random.Generator:
    """Philox generator for one named consumer of the run seed."""
    if consumer not in _CONSUMERS:
        raise KeyError(f"unknown rng consumer: {consumer!r}")
    ss = np.random.SeedSequence(entropy=[int(seed), _CONSUMERS[consumer]])
    return np.random.Generator(np.random.Philox(ss))
