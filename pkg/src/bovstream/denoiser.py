"""Noise-prediction network over a sliding window of frames.

Frames are patchified into spatial tokens. Each block runs attention over
the patches of one frame, then attention over the window slots at each
spatial site, then a feed-forward layer, all pre-layer-norm with residuals.

The temporal attention of block j carries a learnable begin-of-video token
b_j. Before each forward pass b_j is modulated by the latest clean
reference frame: a block-specific MLP maps the pooled reference embedding
to (gamma_raw, beta) and the token becomes

    b~_j = (1 + gamma_raw) * b_j + beta

so a zero-initialized MLP leaves the token untouched. b~_j is prepended to
every spatial site's slot sequence; attention runs over L+1 tokens and the
output drops position 0 to restore length L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .nn import LayerNorm, Linear, Module, Parameter
from .rng import consumer_rng
from .tensor import Tensor


@dataclass
class DenoiserConfig:
    frame_h: int = 16
    frame_w: int = 16
    channels: int = 1
    patch: tuple[int, int] = (2, 2)
    hidden: int = 64
    depth: int = 4
    heads: int = 4
    window: int = 8
    bov_enabled: bool = True

    def __post_init__(self):
        ph, pw = self.patch
        if self.frame_h % ph or self.frame_w % pw:
            raise ConfigError(f"patch {self.patch} must divide frame {self.frame_h}x{self.frame_w}")
        if self.hidden % self.heads:
            raise ConfigError(f"heads {self.heads} must divide hidden {self.hidden}")
        if self.hidden % 2:
            raise ConfigError("hidden must be even for the sinusoidal level embedding")
        if self.depth < 1 or self.window < 1:
            raise ConfigError("depth and window must be >= 1")

    @property
    def sites(self) -> int:
        return (self.frame_h // self.patch[0]) * (self.frame_w // self.patch[1])

    @property
    def patch_dim(self) -> int:
        return self.patch[0] * self.patch[1] * self.channels

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return (self.channels, self.frame_h, self.frame_w)


class MultiHeadAttention(Module):
    """Full self-attention over the middle axis of [batch, seq, hidden]."""

    def __init__(self, hidden: int, heads: int, rng, dtype):
        self.heads = heads
        self.head_dim = hidden // heads
        self.qkv = Linear(hidden, 3 * hidden, rng, dtype=dtype)
        self.out = Linear(hidden, hidden, rng, dtype=dtype)
        self.capture_probs = False
        self.last_probs: np.ndarray | None = None
        self.last_seq_len: int | None = None

    def forward(self, x: Tensor) -> Tensor:
        b, t, hidden = x.shape
        h, hd = self.heads, self.head_dim
        qkv = self.qkv(x)
        q = T.slice_axis(qkv, 2, 0, hidden)
        k = T.slice_axis(qkv, 2, hidden, 2 * hidden)
        v = T.slice_axis(qkv, 2, 2 * hidden, 3 * hidden)
        # [b, t, hidden] -> [b, h, t, hd]
        q = T.transpose(T.reshape(q, (b, t, h, hd)), (0, 2, 1, 3))
        k = T.transpose(T.reshape(k, (b, t, h, hd)), (0, 2, 1, 3))
        v = T.transpose(T.reshape(v, (b, t, h, hd)), (0, 2, 1, 3))
        scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(hd))
        probs = T.softmax_lastdim(scores)
        if self.capture_probs:
            self.last_probs = probs.data.copy()
            self.last_seq_len = t
        ctx = T.matmul(probs, v)
        ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, t, hidden))
        return self.out(ctx)


class FeedForward(Module):
    def __init__(self, hidden: int, rng, dtype):
        self.fc1 = Linear(hidden, 4 * hidden, rng, dtype=dtype)
        self.fc2 = Linear(4 * hidden, hidden, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


class BovBlock(Module):
    """Per-block begin-of-video token plus its modulation MLP."""

    def __init__(self, hidden: int, rng, dtype):
        self.token = Parameter(0.02 * rng.standard_normal(hidden), dtype=dtype)
        self.mlp_in = Linear(hidden, hidden, rng, dtype=dtype)
        # zero-initialized so modulation starts as the identity
        self.mlp_out = Linear(hidden, 2 * hidden, rng, zero_init=True, dtype=dtype)

    def modulate(self, ref_feat: Tensor) -> Tensor:
        hidden = self.token.shape[0]
        raw = self.mlp_out(T.gelu(self.mlp_in(T.reshape(ref_feat, (1, hidden)))))
        gamma_raw = T.reshape(T.slice_axis(raw, 1, 0, hidden), (hidden,))
        beta = T.reshape(T.slice_axis(raw, 1, hidden, 2 * hidden), (hidden,))
        return (1.0 + gamma_raw) * self.token + beta


class DenoiserBlock(Module):
    def __init__(self, cfg: DenoiserConfig, rng, dtype):
        self.ln_spatial = LayerNorm(cfg.hidden, dtype=dtype)
        self.spatial = MultiHeadAttention(cfg.hidden, cfg.heads, rng, dtype)
        self.ln_temporal = LayerNorm(cfg.hidden, dtype=dtype)
        self.temporal = MultiHeadAttention(cfg.hidden, cfg.heads, rng, dtype)
        self.ln_ff = LayerNorm(cfg.hidden, dtype=dtype)
        self.ff = FeedForward(cfg.hidden, rng, dtype)
        self.bov = BovBlock(cfg.hidden, rng, dtype) if cfg.bov_enabled else None

    def forward(self, x: Tensor, ref_feat: Tensor | None, modulate_bov: bool) -> Tensor:
        # x: [L, sites, hidden]; spatial attention within each frame
        x = x + self.spatial(self.ln_spatial(x))
        # temporal attention across window slots at each spatial site
        xt = T.transpose(x, (1, 0, 2))  # [sites, L, hidden]
        sites, L, hidden = xt.shape
        seq = self.ln_temporal(xt)
        if self.bov is not None:
            token = self.bov.modulate(ref_feat) if modulate_bov else self.bov.token
            lead = T.broadcast_to(T.reshape(token, (1, 1, hidden)), (sites, 1, hidden))
            attn = self.temporal(T.concat_axis([lead, seq], 1))
            attn = T.slice_axis(attn, 1, 1, L + 1)  # drop the token slot
        else:
            attn = self.temporal(seq)
        xt = xt + attn
        x = T.transpose(xt, (1, 0, 2))
        return x + self.ff(self.ln_ff(x))


class StreamDenoiser(Module):
    """Predicts per-frame noise for a window of frames at mixed levels."""

    def __init__(self, cfg: DenoiserConfig, seed: int = 42, dtype=T.DEFAULT_DTYPE):
        rng = consumer_rng(seed, "model_init")
        self.cfg = cfg
        self.patch_embed = Linear(cfg.patch_dim, cfg.hidden, rng, dtype=dtype)
        self.level_fc1 = Linear(cfg.hidden, cfg.hidden, rng, dtype=dtype)
        self.level_fc2 = Linear(cfg.hidden, cfg.hidden, rng, dtype=dtype)
        self.blocks = [DenoiserBlock(cfg, rng, dtype) for _ in range(cfg.depth)]
        self.ln_final = LayerNorm(cfg.hidden, dtype=dtype)
        # zero-initialized head: the untrained model predicts zero noise
        self.head = Linear(cfg.hidden, cfg.patch_dim, rng, zero_init=True, dtype=dtype)
        self.modulate_bov = True

    @property
    def dtype(self):
        return self.patch_embed.weight.dtype

    def patchify(self, frames: Tensor) -> Tensor:
        """[N, c, fh, fw] -> [N, sites, patch_dim]."""
        cfg = self.cfg
        n = frames.shape[0]
        ph, pw = cfg.patch
        gh, gw = cfg.frame_h // ph, cfg.frame_w // pw
        x = T.reshape(frames, (n, cfg.channels, gh, ph, gw, pw))
        x = T.transpose(x, (0, 2, 4, 1, 3, 5))
        return T.reshape(x, (n, gh * gw, cfg.patch_dim))

    def unpatchify(self, tokens: Tensor) -> Tensor:
        cfg = self.cfg
        n = tokens.shape[0]
        ph, pw = cfg.patch
        gh, gw = cfg.frame_h // ph, cfg.frame_w // pw
        x = T.reshape(tokens, (n, gh, gw, cfg.channels, ph, pw))
        x = T.transpose(x, (0, 3, 1, 4, 2, 5))
        return T.reshape(x, (n, cfg.channels, cfg.frame_h, cfg.frame_w))

    def embed_reference(self, ref: Tensor) -> Tensor:
        """Pool the reference frame to one feature vector of length hidden."""
        if ref.shape != self.cfg.frame_shape:
            raise ShapeError(f"reference shape {ref.shape} != {self.cfg.frame_shape}")
        tokens = self.patch_embed(self.patchify(T.reshape(ref, (1,) + self.cfg.frame_shape)))
        return T.reshape(T.mean_over_axes(tokens, (0, 1)), (self.cfg.hidden,))

    def forward(self, window: Tensor, levels: np.ndarray, ref: Tensor | None) -> Tensor:
        cfg = self.cfg
        if window.ndim != 4 or window.shape[1:] != cfg.frame_shape:
            raise ShapeError(f"window shape {window.shape} incompatible with {cfg.frame_shape}")
        L = window.shape[0]
        if len(levels) != L:
            raise ShapeError(f"{len(levels)} levels for {L} frames")

        x = self.patch_embed(self.patchify(window))  # [L, sites, hidden]
        emb = T.sinusoidal_embed(Tensor(np.asarray(levels), dtype=self.dtype), cfg.hidden)
        emb = self.level_fc2(T.gelu(self.level_fc1(emb)))
        x = x + T.reshape(emb, (L, 1, cfg.hidden))  # each frame sees its own level

        ref_feat = None
        if cfg.bov_enabled and self.modulate_bov:
            if ref is None:
                raise ShapeError("reference frame required when bov_enabled")
            ref_feat = self.embed_reference(ref)
        for block in self.blocks:
            x = block(x, ref_feat, self.modulate_bov)
        return self.unpatchify(self.head(self.ln_final(x)))

    def predict_eps(self, window: np.ndarray, levels: np.ndarray,
                    ref: np.ndarray | None) -> np.ndarray:
        """Inference entry point over plain arrays, off the autodiff tape."""
        with T.no_grad():
            out = self.forward(
                Tensor(window.astype(self.dtype, copy=False)),
                levels,
                None if ref is None else Tensor(ref.astype(self.dtype, copy=False)),
            )
        return out.data

    def set_capture_probs(self, enabled: bool) -> None:
        for block in self.blocks:
            block.spatial.capture_probs = enabled
            block.temporal.capture_probs = enabled


def denoiser_forward(model: StreamDenoiser, window: Tensor, levels: np.ndarray,
                     ref: Tensor | None) -> Tensor:
    return model.forward(window, levels, ref)
