"""Sign-modulated Gaussian latents and the VMLT tensor container.

A frame latent is a (c, h, w) float array at standard-normal scale; a video
latent stacks frames into (f, c, h, w). Watermarking replaces the signs of a
Gaussian draw with a +-1 codeword while keeping magnitudes, which leaves the
marginal distribution exactly N(0, 1).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ._rng import spawn
from .errors import FormatError, LengthError, ShapeMismatch
from .prc import PrcKey, encode

_MAGIC = b"VMLT"
_VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2}


@dataclass(frozen=True)
class LatentShape:
    c: int
    h: int
    w: int

    def __post_init__(self):
        if self.c < 1 or self.h < 1 or self.w < 1:
            raise ShapeMismatch(f"invalid latent shape {(self.c, self.h, self.w)}")

    @property
    def n(self) -> int:
        return self.c * self.h * self.w

    def dims(self) -> tuple[int, int, int]:
        return (self.c, self.h, self.w)


def sample_gaussian(shape: LatentShape, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. standard-normal frame latent."""
    return rng.standard_normal(shape.dims())


def embed_frame(codeword: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Replace the signs of `noise` with the codeword, keeping magnitudes."""
    codeword = np.asarray(codeword)
    if codeword.size != noise.size:
        raise ShapeMismatch(
            f"codeword length {codeword.size} != latent element count {noise.size}"
        )
    return codeword.reshape(noise.shape).astype(noise.dtype) * np.abs(noise)


def extract_signs(latent: np.ndarray) -> np.ndarray:
    """Flattened sign pattern in {-1, +1}; zeros count as +1."""
    flat = np.asarray(latent, dtype=np.float64).ravel()
    return np.where(flat < 0, -1.0, 1.0)


def embed_video(
    key: PrcKey,
    window: np.ndarray,
    shape: LatentShape,
    seed: int,
    skip_first: bool = False,
) -> np.ndarray:
    """Watermark one video: frame i carries window[i] (or stays plain Gaussian
    for frame 0 in skip_first mode). Each frame uses the substream (seed, i).
    """
    if shape.n != key.params.n:
        raise ShapeMismatch(
            f"latent shape {shape.dims()} has {shape.n} elements, key expects {key.params.n}"
        )
    window = np.asarray(window, dtype=np.uint8)
    f = window.shape[0] + (1 if skip_first else 0)
    video = np.empty((f,) + shape.dims(), dtype=np.float64)
    for i in range(f):
        rng = spawn(seed, 0xF7A, i)
        noise = sample_gaussian(shape, rng)
        if skip_first and i == 0:
            video[i] = noise
        else:
            msg = window[i - 1] if skip_first else window[i]
            video[i] = embed_frame(encode(key, msg, rng), noise)
    return video


def sample_video(shape: LatentShape, frames: int, seed: int) -> np.ndarray:
    """Unwatermarked video latent with per-frame substreams."""
    if frames < 1:
        raise LengthError("a video needs at least one frame")
    video = np.empty((frames,) + shape.dims(), dtype=np.float64)
    for i in range(frames):
        video[i] = sample_gaussian(shape, spawn(seed, 0xF7A, i))
    return video


def write_latents(path, video: np.ndarray) -> None:
    """Write a (f, c, h, w) tensor as a VMLT container (little-endian)."""
    video = np.asarray(video)
    if video.ndim != 4:
        raise ShapeMismatch(f"expected (f, c, h, w) tensor, got shape {video.shape}")
    dtype = np.dtype(video.dtype)
    if dtype not in _DTYPE_CODES:
        raise FormatError(f"unsupported dtype {dtype}; use float32 or float64")
    f, c, h, w = video.shape
    header = struct.pack(
        "<4sHBBI3I", _MAGIC, _VERSION, _DTYPE_CODES[dtype], 3, f, c, h, w
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(video, dtype=dtype.newbyteorder("<")).tobytes())


def read_latents(path) -> np.ndarray:
    """Read a VMLT container back into a (f, c, h, w) tensor."""
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12:
            raise FormatError("truncated VMLT header")
        magic, version, dtype_code, rank, f = struct.unpack("<4sHBBI", head)
        if magic != _MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != _VERSION:
            raise FormatError(f"unsupported VMLT version {version}")
        if dtype_code not in _DTYPES:
            raise FormatError(f"unknown dtype code {dtype_code}")
        if rank != 3:
            raise FormatError(f"expected rank 3 frames, got {rank}")
        dims = struct.unpack("<3I", fh.read(12))
        dtype = _DTYPES[dtype_code]
        count = f * dims[0] * dims[1] * dims[2]
        payload = fh.read(count * dtype.itemsize)
        if len(payload) != count * dtype.itemsize:
            raise FormatError("truncated VMLT payload")
        if fh.read(1):
            raise FormatError("trailing bytes after VMLT payload")
    return np.frombuffer(payload, dtype=dtype).reshape((f,) + dims).copy()
