"""Autoregressive video generation by stream denoising, desk scale.

A window of L frames carries strictly increasing noise levels; every
iteration denoises the window in n uniform substeps, emits one clean
frame, and appends fresh noise. Each temporal attention block conditions
on the latest clean frame through a modulated begin-of-video token. Built
on a minimal numpy autodiff core so the whole pipeline is testable from
gradients up to closed-form sampler statistics.
"""

from .denoiser import BovBlock, DenoiserConfig, StreamDenoiser, denoiser_forward
from .diffusion import (VarianceSchedule, alpha_bar_at, build_schedule, ddim_step,
                        forward_noise, grid_level, sampling_grid)
from .formats import load_checkpoint, load_frame, save_checkpoint, save_frame, save_pgm
from .nn import Adam, AdamState, GradCheckReport, adam_step, grad_check
from .stream import (FrameWindow, GenerationConfig, LatentFrame, StreamState,
                     init_stream, iterate, make_self_start_frames, run, substep)
from .synthetic import (Ar1Params, MovingBarParams, OracleDenoiser, analytic_eps,
                        gen_ar1_video, gen_moving_bar_video, oracle_denoiser_adapter)
from .tensor import Tensor, apply, finite_checks, no_grad
from .training import (NoiseLevelVector, TrainConfig, TrainingBatch, make_batch,
                       sample_training_levels, train, training_loss)

__version__ = "0.1.0"
