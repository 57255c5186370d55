"""Command-line entry points: train, sample, bench, eval, gradcheck."""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import metrics
from . import tensor as T
from .config import RunConfig, load_config
from .denoiser import DenoiserConfig, StreamDenoiser
from .errors import (BovstreamError, ConfigError, CorruptCheckpointError,
                     DataError, NumericsError, VersionError)
from .formats import load_checkpoint, load_frame, save_checkpoint, save_frame, save_pgm
from .nn import grad_check
from .rng import consumer_rng
from .stream import GenerationConfig, init_stream, make_self_start_frames, run
from .synthetic import (Ar1Params, MovingBarParams, OracleDenoiser,
                        gen_ar1_video, gen_moving_bar_video)
from .training import make_batch, train, training_loss

EXIT_CONFIG = 2
EXIT_NUMERICS = 3
EXIT_CHECKPOINT = 4


def _load_run_config(path: str | None) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _make_dataset(cfg: RunConfig) -> np.ndarray:
    shape = (cfg.channels, cfg.frame_h, cfg.frame_w)
    if cfg.data == "ar1":
        params = Ar1Params(rho=cfg.rho, frame_shape=shape, seed=cfg.seed)
        return gen_ar1_video(params, cfg.video_length)
    if cfg.data == "bar":
        params = MovingBarParams(frame_shape=shape, bar_width=cfg.bar_width,
                                 velocity=cfg.bar_velocity)
        return gen_moving_bar_video(params, cfg.video_length)
    raise ConfigError(f"unknown data source: {cfg.data!r}")


# ------------------------------------------------------------------ train

def cmd_train(args) -> int:
    cfg = _load_run_config(args.config)
    if args.schedule:
        cfg.schedule = args.schedule.replace("-", "_")
    if args.steps is not None:
        cfg.steps = args.steps
    if args.seed is not None:
        cfg.seed = args.seed
    if args.data:
        cfg.data = args.data
    if args.lr is not None:
        cfg.lr = args.lr

    dataset = _make_dataset(cfg)
    model = StreamDenoiser(cfg.denoiser_config(), seed=cfg.seed)
    schedule = cfg.variance_schedule()
    history = train(model, dataset, cfg.train_config(), schedule)

    out = Path(args.out)
    save_checkpoint(model, out)
    loss_path = Path(args.loss_csv) if args.loss_csv else out.with_suffix(out.suffix + ".loss.csv")
    with open(loss_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for step, loss in enumerate(history):
            writer.writerow([step, f"{loss:.8f}"])
    print(f"trained {cfg.steps} steps; first loss {history[0]:.4f}, "
          f"last {history[-1]:.4f}; checkpoint {out}")
    return 0


# ----------------------------------------------------------------- sample

def _load_conditioning(args, frame_shape, L: int) -> np.ndarray:
    if args.cond:
        cond = load_frame(args.cond)
        if args.self_start:
            if cond.ndim != 3:
                raise ConfigError(f"--self-start expects one frame, got rank {cond.ndim}")
            return make_self_start_frames(cond, L)
        if cond.ndim != 4 or cond.shape[0] != L + 1:
            raise ConfigError(
                f"conditioning must hold L+1={L + 1} frames, got {cond.shape}")
        return cond
    if args.self_start:
        return make_self_start_frames(np.zeros(frame_shape, dtype=np.float32), L)
    raise ConfigError("need --cond FILE or --self-start")


def cmd_sample(args) -> int:
    cfg = _load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.n is not None:
        cfg.substeps = args.n
    if args.L is not None:
        cfg.window = args.L
    if args.frames is not None:
        cfg.frames = args.frames

    schedule = cfg.variance_schedule()
    if args.oracle:
        denoiser = OracleDenoiser(schedule)
        frame_shape = (cfg.channels, cfg.frame_h, cfg.frame_w)
    else:
        denoiser = load_checkpoint(args.ckpt)
        frame_shape = denoiser.cfg.frame_shape

    gen = GenerationConfig(L=cfg.window, n=cfg.substeps, K=cfg.frames,
                           seed=cfg.seed, bov_enabled=cfg.bov_enabled)
    cond = _load_conditioning(args, frame_shape, gen.L)
    if cond.shape[1:] != frame_shape:
        raise ConfigError(f"conditioning frames {cond.shape[1:]} != model frames {frame_shape}")

    state = init_stream(cond, gen, schedule)
    with T.no_grad():
        frames = run(state, denoiser, gen.K)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for frame in frames:
        stem = out_dir / f"frame_{frame.index:05d}"
        if args.export in ("flt1", "both"):
            save_frame(stem.with_suffix(".flt1"), frame.values)
            checksum = zlib.crc32(stem.with_suffix(".flt1").read_bytes())
        else:
            checksum = zlib.crc32(np.ascontiguousarray(frame.values, dtype="<f4").tobytes())
        if args.export in ("pgm", "both"):
            save_pgm(stem.with_suffix(".pgm"), frame.values)
        rows.append((frame.index, f"{checksum:08x}"))
    with open(out_dir / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "checksum"])
        writer.writerows(rows)
    print(f"wrote {len(frames)} frames to {out_dir}")
    return 0


# ------------------------------------------------------------------ bench

def bench_config(L: int) -> DenoiserConfig:
    """Temporal-attention-heavy shape so the L^2 term carries the runtime:
    few spatial sites, one-dimensional heads, deep stack."""
    return DenoiserConfig(frame_h=8, frame_w=8, channels=1, patch=(2, 2),
                          hidden=16, depth=8, heads=16, window=L,
                          bov_enabled=True)


def _bench_once(L: int, n: int, frames: int, schedule, seed: int) -> float:
    cfg = bench_config(L)
    model = StreamDenoiser(cfg, seed=seed)
    gen = GenerationConfig(L=L, n=n, K=frames, seed=seed)
    rng = consumer_rng(seed, "data")
    cond = rng.standard_normal((L + 1,) + cfg.frame_shape).astype(np.float32)
    state = init_stream(cond, gen, schedule)
    # single-threaded BLAS keeps per-run medians reproducible on small arrays
    with threadpool_limits(limits=1), T.no_grad(), T.finite_checks(False):
        start = time.perf_counter()
        run(state, model, frames)
        elapsed = time.perf_counter() - start
    return elapsed / frames


def cmd_bench(args) -> int:
    L_list = [int(v) for v in args.L.split(",")]
    n_list = [int(v) for v in args.n.split(",")]
    schedule = RunConfig().variance_schedule()
    workers = max(1, int(os.environ.get("BOV_THREADS", "1")))

    rows = []
    for L in L_list:
        for n in n_list:
            _bench_once(L, n, max(2, args.frames // 4), schedule, args.seed)  # warmup
            reps = range(args.repeats)
            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    times = list(pool.map(
                        lambda _: _bench_once(L, n, args.frames, schedule, args.seed), reps))
            else:
                times = [_bench_once(L, n, args.frames, schedule, args.seed) for _ in reps]
            rows.append((L, n, float(np.median(times)), n))

    out = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(out)
    writer.writerow(["L", "n", "seconds_per_frame", "denoiser_evals_per_frame"])
    for L, n, spf, evals in rows:
        writer.writerow([L, n, f"{spf:.6f}", evals])
    if args.out:
        out.close()
    return 0


# ------------------------------------------------------------------- eval

def cmd_eval(args) -> int:
    frame_dir = Path(args.frames)
    paths = sorted(frame_dir.glob("frame_*.flt1"))
    if not paths:
        raise DataError(f"no frame_*.flt1 files in {frame_dir}")
    frames = np.stack([load_frame(p) for p in paths])

    mean, var = metrics.pixel_stats(frames)
    rows = [
        ("frames", len(paths)),
        ("pixel_mean", f"{mean:.6f}"),
        ("pixel_variance", f"{var:.6f}"),
        ("temporal_consistency", f"{metrics.temporal_consistency(frames):.6f}"),
        ("dynamic_degree", f"{metrics.dynamic_degree(frames):.6f}"),
    ]
    if args.oracle_stats:
        schedule = RunConfig().variance_schedule()
        predicted = metrics.closed_form_output_variance(schedule, args.L, args.n)
        rows.append(("predicted_variance", f"{predicted:.6f}"))
        rows.append(("variance_ratio", f"{var / predicted:.6f}"))

    out = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(out)
    writer.writerow(["metric", "value"])
    writer.writerows(rows)
    if args.out:
        out.close()
    return 0


# -------------------------------------------------------------- gradcheck

def cmd_gradcheck(args) -> int:
    cfg = DenoiserConfig(frame_h=4, frame_w=4, channels=1, patch=(2, 2),
                         hidden=16, depth=2, heads=2, window=2)
    model = StreamDenoiser(cfg, seed=args.seed).astype(np.float64)
    jitter = np.random.default_rng(args.seed)
    for _, p in model.named_parameters():
        p.data = p.data + 0.05 * jitter.standard_normal(p.data.shape)

    schedule = RunConfig().variance_schedule()
    data_rng = consumer_rng(args.seed, "data")
    video = data_rng.standard_normal((cfg.window + 1,) + cfg.frame_shape)
    batch = make_batch(video, 0, "progressive", data_rng, schedule, cfg.window)

    report = grad_check(lambda: training_loss(model, batch),
                        dict(model.named_parameters()), tol=args.tol)
    print(f"max relative error {report.max_rel_err:.3e} over {report.checked} "
          f"coordinates (worst {report.worst}); tolerance {report.tol:g}")
    return 0 if report.passed else 1


# ------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bovstream",
                                description="stream-denoising video toy")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train the denoiser on synthetic video")
    t.add_argument("--config", help="key = value config file")
    t.add_argument("--schedule", choices=["progressive", "random", "dist-aug", "dist_aug"])
    t.add_argument("--steps", type=int)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--seed", type=int)
    t.add_argument("--data", choices=["ar1", "bar"])
    t.add_argument("--lr", type=float)
    t.add_argument("--loss-csv", help="loss history path (default <out>.loss.csv)")
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sample", help="generate frames autoregressively")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--ckpt", help="checkpoint path")
    src.add_argument("--oracle", action="store_true",
                     help="use the analytic noise predictor instead of a model")
    s.add_argument("--config", help="key = value config file")
    s.add_argument("--frames", type=int, help="clean frames to emit")
    s.add_argument("--n", type=int, help="substeps per iteration")
    s.add_argument("--L", type=int, help="attention window size")
    s.add_argument("--seed", type=int)
    s.add_argument("--cond", help="FLT1 file with L+1 conditioning frames")
    s.add_argument("--self-start", action="store_true",
                   help="replicate one frame (or zeros) as conditioning; non-canonical")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--export", choices=["flt1", "pgm", "both"], default="flt1")
    s.set_defaults(fn=cmd_sample)

    b = sub.add_parser("bench", help="wall-clock scaling in L and n")
    b.add_argument("--L", default="8,16", help="comma-separated window sizes")
    b.add_argument("--n", default="1,4", help="comma-separated substep counts")
    b.add_argument("--frames", type=int, default=8, help="frames per timed run")
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--seed", type=int, default=42)
    b.add_argument("--out", help="CSV path (default stdout)")
    b.set_defaults(fn=cmd_bench)

    e = sub.add_parser("eval", help="statistics over a directory of frames")
    e.add_argument("--frames", required=True, help="directory of frame_*.flt1")
    e.add_argument("--oracle-stats", action="store_true",
                   help="compare variance to the closed-form oracle prediction")
    e.add_argument("--L", type=int, default=8)
    e.add_argument("--n", type=int, default=4)
    e.add_argument("--out", help="CSV path (default stdout)")
    e.set_defaults(fn=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--tol", type=float, default=1e-4)
    g.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as e:
        print(f"numerics error: {e}", file=sys.stderr)
        return EXIT_NUMERICS
    except (CorruptCheckpointError, VersionError) as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except BovstreamError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
