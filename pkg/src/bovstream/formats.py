"""Binary persistence: checkpoints, raw frame tensors, and PGM export.

Checkpoint layout (little-endian):
    "ABOV" | version u32 | records... | crc32 u32
    record: name_len u32 | name utf-8 | rank u32 | dims u32... | f32 data
The CRC covers every byte before it. Model configuration rides along as
scalar records under the "config/" prefix so a checkpoint alone rebuilds
the model.

Frame tensor layout ("FLT1"): magic | rank u32 | dims u32... | f32 data.
PGM export is 8-bit, lossy, for eyeballing only.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .denoiser import DenoiserConfig, StreamDenoiser
from .errors import CorruptCheckpointError, ShapeError, VersionError

CHECKPOINT_MAGIC = b"ABOV"
CHECKPOINT_VERSION = 1
FRAME_MAGIC = b"FLT1"

_CONFIG_FIELDS = ("frame_h", "frame_w", "channels", "patch_h", "patch_w",
                  "hidden", "depth", "heads", "window", "bov_enabled")


def _config_records(cfg: DenoiserConfig) -> dict[str, np.ndarray]:
    values = {
        "frame_h": cfg.frame_h, "frame_w": cfg.frame_w, "channels": cfg.channels,
        "patch_h": cfg.patch[0], "patch_w": cfg.patch[1], "hidden": cfg.hidden,
        "depth": cfg.depth, "heads": cfg.heads, "window": cfg.window,
        "bov_enabled": int(cfg.bov_enabled),
    }
    return {f"config/{k}": np.array([float(values[k])], dtype=np.float32)
            for k in _CONFIG_FIELDS}


def _config_from_records(records: dict[str, np.ndarray]) -> DenoiserConfig:
    vals = {}
    for k in _CONFIG_FIELDS:
        key = f"config/{k}"
        if key not in records:
            raise CorruptCheckpointError(f"checkpoint missing {key}")
        vals[k] = int(records[key][0])
    return DenoiserConfig(
        frame_h=vals["frame_h"], frame_w=vals["frame_w"], channels=vals["channels"],
        patch=(vals["patch_h"], vals["patch_w"]), hidden=vals["hidden"],
        depth=vals["depth"], heads=vals["heads"], window=vals["window"],
        bov_enabled=bool(vals["bov_enabled"]))


def _pack_record(name: str, arr: np.ndarray) -> bytes:
    data = np.ascontiguousarray(arr, dtype="<f4")
    nb = name.encode("utf-8")
    head = struct.pack("<I", len(nb)) + nb
    head += struct.pack("<I", data.ndim) + struct.pack(f"<{data.ndim}I", *data.shape)
    return head + data.tobytes()


def save_checkpoint(model: StreamDenoiser, path) -> None:
    records = dict(_config_records(model.cfg))
    for name, p in model.named_parameters():
        records[name] = p.data
    body = CHECKPOINT_MAGIC + struct.pack("<I", CHECKPOINT_VERSION)
    for name in sorted(records):
        body += _pack_record(name, records[name])
    body += struct.pack("<I", zlib.crc32(body))
    Path(path).write_bytes(body)


def _read_records(buf: bytes, offset: int, end: int) -> dict[str, np.ndarray]:
    records: dict[str, np.ndarray] = {}
    while offset < end:
        if offset + 4 > end:
            raise CorruptCheckpointError("truncated record header")
        (name_len,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        if offset + name_len > end:
            raise CorruptCheckpointError("truncated record name")
        name = buf[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        if offset + 4 * rank > end:
            raise CorruptCheckpointError("truncated record dims")
        dims = struct.unpack_from(f"<{rank}I", buf, offset)
        offset += 4 * rank
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        nbytes = 4 * count
        if offset + nbytes > end:
            raise CorruptCheckpointError("truncated record data")
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=offset).reshape(dims)
        records[name] = arr.copy()
        offset += nbytes
    return records


def load_checkpoint(path) -> StreamDenoiser:
    buf = Path(path).read_bytes()
    if len(buf) < 12 or buf[:4] != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError(f"not a checkpoint: {path}")
    (stored_crc,) = struct.unpack_from("<I", buf, len(buf) - 4)
    if zlib.crc32(buf[:-4]) != stored_crc:
        raise CorruptCheckpointError(f"CRC mismatch in {path}")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    records = _read_records(buf, 8, len(buf) - 4)
    cfg = _config_from_records(records)
    weights = {k: v for k, v in records.items() if not k.startswith("config/")}
    model = StreamDenoiser(cfg)
    model.load_state(weights)
    return model


# ------------------------------------------------------------- frame io

def save_frame(path, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr, dtype="<f4")
    out = FRAME_MAGIC + struct.pack("<I", data.ndim)
    out += struct.pack(f"<{data.ndim}I", *data.shape)
    out += data.tobytes()
    Path(path).write_bytes(out)


def load_frame(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < 8 or buf[:4] != FRAME_MAGIC:
        raise CorruptCheckpointError(f"not a frame tensor: {path}")
    (rank,) = struct.unpack_from("<I", buf, 4)
    dims = struct.unpack_from(f"<{rank}I", buf, 8)
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    expected = 8 + 4 * rank + 4 * count
    if len(buf) != expected:
        raise CorruptCheckpointError(f"frame tensor size mismatch in {path}")
    return np.frombuffer(buf, dtype="<f4", count=count, offset=8 + 4 * rank).reshape(dims).copy()


def save_pgm(path, frame: np.ndarray) -> None:
    """8-bit grayscale preview; [min, max] maps affinely onto [0, 255]."""
    if frame.ndim == 3:
        frame = frame.mean(axis=0)
    if frame.ndim != 2:
        raise ShapeError(f"PGM export needs a 2-d or [c,h,w] frame, got {frame.shape}")
    lo, hi = float(frame.min()), float(frame.max())
    if hi > lo:
        scaled = (frame - lo) * (255.0 / (hi - lo))
    else:
        scaled = np.zeros_like(frame)
    pixels = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes())
