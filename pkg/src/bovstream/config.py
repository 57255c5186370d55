"""Flat key = value run configuration.

One text format drives every CLI command: `key = value` lines, `#`
comments, every key optional with a default, unknown keys rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .denoiser import DenoiserConfig
from .diffusion import VarianceSchedule, build_schedule
from .errors import ConfigError
from .stream import GenerationConfig
from .training import TrainConfig


@dataclass
class RunConfig:
    # model
    frame_h: int = 16
    frame_w: int = 16
    channels: int = 1
    patch_h: int = 2
    patch_w: int = 2
    hidden: int = 64
    depth: int = 4
    heads: int = 4
    window: int = 8          # attention window size L
    bov_enabled: bool = True
    # diffusion
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    # generation
    substeps: int = 4        # n denoising substeps per iteration
    frames: int = 16         # clean frames to emit
    # training
    steps: int = 500
    schedule: str = "dist_aug"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_accum: int = 1
    # data
    data: str = "ar1"
    rho: float = 0.9
    bar_width: int = 3
    bar_velocity: int = 1
    video_length: int = 256
    # everything
    seed: int = 42

    def denoiser_config(self) -> DenoiserConfig:
        return DenoiserConfig(
            frame_h=self.frame_h, frame_w=self.frame_w, channels=self.channels,
            patch=(self.patch_h, self.patch_w), hidden=self.hidden,
            depth=self.depth, heads=self.heads, window=self.window,
            bov_enabled=self.bov_enabled)

    def generation_config(self) -> GenerationConfig:
        return GenerationConfig(L=self.window, n=self.substeps, K=self.frames,
                                seed=self.seed, bov_enabled=self.bov_enabled)

    def train_config(self) -> TrainConfig:
        return TrainConfig(steps=self.steps, kind=self.schedule, lr=self.lr,
                           beta1=self.beta1, beta2=self.beta2,
                           adam_eps=self.adam_eps, seed=self.seed,
                           grad_accum=self.grad_accum)

    def variance_schedule(self) -> VarianceSchedule:
        return build_schedule(self.timesteps, self.beta_start, self.beta_end)


def _parse_value(raw: str, target_type: type, key: str):
    raw = raw.strip()
    if target_type is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return target_type(raw)
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from e


def parse_config(text: str) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    # dataclass field types arrive as strings under from __future__ annotations
    resolve = {"int": int, "float": float, "bool": bool, "str": str}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(raw, resolve[types[key]], key)
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(p.read_text())
