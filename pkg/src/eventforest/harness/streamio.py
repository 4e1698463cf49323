# Binary feature stream format (all little-endian):
#
#   8 bytes   magic b"EVMF0001"
#   u32 x 3   frame_count, tokens_per_frame, dim
#   frame_count records of
#       f64                       timestamp in seconds
#       f32 x tokens_per_frame*dim row-major tokens

import json
import os
import struct
from typing import Iterator, Tuple

import numpy as np

from ..errors import BadMagic, ShapeMismatch, TruncatedFile

MAGIC = b"EVMF0001"
_HEADER = struct.Struct("<III")
HEADER_SIZE = len(MAGIC) + _HEADER.size


def record_dtype(tokens_per_frame: int, dim: int) -> np.dtype:
    return np.dtype([("t", "<f8"), ("x", "<f4", (tokens_per_frame, dim))])


def write_stream(path, times, frames) -> None:
    frames = np.asarray(frames)
    times = np.asarray(times, dtype=np.float64)
    if frames.ndim != 3:
        raise ShapeMismatch(f"frames must be (count, tokens, dim), got {frames.shape}")
    if times.shape != (frames.shape[0],):
        raise ShapeMismatch(f"{times.shape} timestamps for {frames.shape[0]} frames")
    count, tokens, dim = frames.shape
    rec = np.empty(count, dtype=record_dtype(tokens, dim))
    rec["t"] = times
    rec["x"] = frames
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(count, tokens, dim))
        fh.write(rec.tobytes())


def read_header(path) -> Tuple[int, int, int]:
    with open(path, "rb") as fh:
        head = fh.read(HEADER_SIZE)
    if len(head) < len(MAGIC) or head[:len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: not an EVMF0001 stream")
    if len(head) < HEADER_SIZE:
        raise TruncatedFile(f"{path}: header is {len(head)} bytes, expected {HEADER_SIZE}")
    count, tokens, dim = _HEADER.unpack(head[len(MAGIC):])
    if count and (tokens == 0 or dim == 0):
        raise ShapeMismatch(f"{path}: zero-sized frames ({tokens} x {dim})")
    return count, tokens, dim


def _records(path, mode):
    count, tokens, dim = read_header(path)
    dt = record_dtype(tokens, dim)
    expected = HEADER_SIZE + count * dt.itemsize
    size = os.path.getsize(path)
    if size < expected:
        raise TruncatedFile(f"{path}: {size} bytes, header promises {expected}")
    if size > expected:
        raise ShapeMismatch(f"{path}: {size - expected} trailing bytes after {count} frames")
    if count == 0:
        return np.empty(0, dtype=dt)
    return np.memmap(path, dtype=dt, mode=mode, offset=HEADER_SIZE, shape=(count,))


def read_stream(path) -> Tuple[np.ndarray, np.ndarray]:
    """Load ``(times, frames)``; frames are float32 ``(count, tokens, dim)``."""
    rec = _records(path, "r")
    return np.array(rec["t"], dtype=np.float64), np.array(rec["x"], dtype=np.float32)


def iter_stream(path) -> Iterator[Tuple[float, np.ndarray]]:
    """Yield frames one at a time without loading the whole file."""
    rec = _records(path, "r")
    for k in range(len(rec)):
        yield float(rec["t"][k]), np.array(rec["x"][k], dtype=np.float32)


def truth_path(path) -> str:
    return str(path) + ".truth.json"


def write_truth(path, truth) -> None:
    with open(truth_path(path), "w") as fh:
        json.dump(truth.to_dict(), fh)


def read_truth(path):
    from ..synth import GroundTruth
    p = truth_path(path)
    if not os.path.exists(p):
        return None
    with open(p) as fh:
        return GroundTruth.from_dict(json.load(fh))
