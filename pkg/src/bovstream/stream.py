"""Autoregressive stream generation.

The window holds L frames at strictly increasing noise levels. Every
iteration runs n denoising substeps (each a uniform decrement of
T/(n*L) across the whole window), emits the now-clean first frame, makes
it the new reference, shifts the window, and appends a pure-noise frame
at level T. Levels are always reassigned from the canonical grid, never
decremented in floating point, so the boundary grid is reproduced exactly
at every iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import VarianceSchedule, ddim_step, forward_noise, grid_level
from .errors import ConfigError, InternalError
from .rng import consumer_rng


@dataclass
class LatentFrame:
    values: np.ndarray
    index: int
    level: float
    trajectory: list[float] = field(default_factory=list)
    denoiser_evals: int = 0


@dataclass
class FrameWindow:
    frames: list[LatentFrame]

    @property
    def levels(self) -> list[float]:
        return [f.level for f in self.frames]

    def values(self) -> np.ndarray:
        return np.stack([f.values for f in self.frames])

    def check_monotone(self) -> None:
        lv = self.levels
        if any(a >= b for a, b in zip(lv, lv[1:])):
            raise InternalError(f"window levels not strictly increasing: {lv}")


@dataclass
class GenerationConfig:
    L: int = 8
    n: int = 4
    K: int = 16
    seed: int = 42
    bov_enabled: bool = True

    def __post_init__(self):
        if self.L < 1 or self.n < 1 or self.K < 1:
            raise ConfigError(f"need L, n, K >= 1, got {self.L}, {self.n}, {self.K}")


@dataclass
class StreamState:
    window: FrameWindow
    reference: LatentFrame
    k: int                     # current iteration, 1-based
    substep: int               # completed substeps within the iteration
    n: int
    schedule: VarianceSchedule
    rng_append: np.random.Generator
    emitted: int = 0
    total_denoiser_evals: int = 0

    @property
    def L(self) -> int:
        return len(self.window.frames)

    def slot_level(self, slot: int, substep: int) -> float:
        """Grid level of window slot `slot` after `substep` decrements."""
        return grid_level((slot + 1) * self.n - substep, self.schedule.T, self.L, self.n)


def init_stream(initial_frames: np.ndarray, cfg: GenerationConfig,
                schedule: VarianceSchedule,
                rng: np.random.Generator | None = None) -> StreamState:
    """Build the starting state from L+1 clean conditioning frames.

    Frame 0 becomes the reference; frames 1..L are noised to the
    progressive grid [T/L, 2T/L, ..., T] with independent draws.
    """
    L, n, T = cfg.L, cfg.n, schedule.T
    if initial_frames.ndim != 4 or initial_frames.shape[0] != L + 1:
        raise ConfigError(
            f"need exactly L+1={L + 1} conditioning frames, got {initial_frames.shape}")
    rng = rng or consumer_rng(cfg.seed, "init_noise")

    reference = LatentFrame(
        values=np.ascontiguousarray(initial_frames[0], dtype=np.float32),
        index=0, level=0.0)
    frames = []
    for m in range(L):
        level = grid_level((m + 1) * n, T, L, n)  # == (m+1) T / L
        eps = rng.standard_normal(initial_frames[m + 1].shape, dtype=np.float32)
        noised = forward_noise(initial_frames[m + 1].astype(np.float32), level, eps, schedule)
        frames.append(LatentFrame(values=noised, index=m + 1, level=level,
                                  trajectory=[level]))
    state = StreamState(
        window=FrameWindow(frames), reference=reference, k=1, substep=0,
        n=n, schedule=schedule,
        rng_append=consumer_rng(cfg.seed, "append_noise"))
    state.window.check_monotone()
    return state


def make_self_start_frames(frame: np.ndarray, L: int) -> np.ndarray:
    """Replicate one seed frame into the L+1 conditioning slots.

    Convenience only; the canonical cold start takes L+1 distinct frames.
    """
    return np.repeat(frame[None], L + 1, axis=0)


def substep(state: StreamState, denoiser) -> StreamState:
    """One uniform noise decrement of T/(n*L) across the whole window."""
    if state.substep >= state.n:
        raise InternalError(f"substep {state.substep} already at n={state.n}")
    window = state.window
    eps_hat = denoiser.predict_eps(
        window.values(), np.array(window.levels), state.reference.values)
    state.total_denoiser_evals += 1
    i_next = state.substep + 1
    for slot, frame in enumerate(window.frames):
        target = state.slot_level(slot, i_next)
        if target < 0.0:
            raise InternalError(f"slot {slot} level would go below 0")
        frame.values = ddim_step(frame.values, eps_hat[slot], frame.level,
                                 target, state.schedule)
        frame.level = target
        frame.trajectory.append(target)
        frame.denoiser_evals += 1
    state.substep = i_next
    window.check_monotone()
    return state


def iterate(state: StreamState, denoiser) -> tuple[LatentFrame, StreamState]:
    """Run n substeps, emit the clean first frame, shift, append noise."""
    if state.substep != 0:
        raise InternalError(f"iterate must start at substep 0, got {state.substep}")
    for _ in range(state.n):
        substep(state, denoiser)

    emitted = state.window.frames.pop(0)
    if emitted.level != 0.0:
        raise InternalError(f"emitted frame at level {emitted.level}, expected 0")
    state.reference = LatentFrame(values=emitted.values.copy(),
                                  index=emitted.index, level=0.0)

    T = state.schedule.T
    L = len(state.window.frames) + 1
    noise = state.rng_append.standard_normal(emitted.values.shape, dtype=np.float32)
    top = grid_level(state.n * L, T, L, state.n)  # == T exactly
    state.window.frames.append(LatentFrame(values=noise, index=state.k + L,
                                           level=top, trajectory=[top]))
    state.k += 1
    state.substep = 0
    state.emitted += 1
    state.window.check_monotone()
    return emitted, state


def run(state: StreamState, denoiser, K: int) -> list[LatentFrame]:
    """Emit K clean frames in index order."""
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    out = []
    for _ in range(K):
        frame, state = iterate(state, denoiser)
        out.append(frame)
    return out
