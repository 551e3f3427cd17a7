"""Parametric stand-in for generation -> attack -> DDIM inversion.

The inversion channel mixes each latent element with fresh Gaussian noise at
fidelity rho (rho = 1 recovers the input exactly); the induced per-element
sign-flip probability is arccos(rho)/pi. Temporal attacks permute, remove or
splice frames; spatial attacks are modeled as a reduction of rho.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from ._rng import spawn
from .errors import InvalidParams, InvalidSpec

SPATIAL_KINDS = ("blur", "jitter", "compress")
# rho' = rho * (1 - kappa * severity); calibration knobs, not paper values
SPATIAL_KAPPA = {"blur": 0.25, "jitter": 0.15, "compress": 0.35}


@dataclass
class ChannelParams:
    rho: float
    mode: str = "soft"  # "soft" keeps magnitudes, "hard" emits signs only
    seed: int = 0
    i2v_first_frame: bool = False  # frame 0 unrecoverable (forced rho = 0)

    def validate(self) -> None:
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidParams(f"rho must lie in [0, 1], got {self.rho}")
        if self.mode not in ("soft", "hard"):
            raise InvalidParams(f"mode must be soft or hard, got {self.mode!r}")


@dataclass
class AttackSpec:
    kind: str  # swap | insert | drop | spatial
    i: int = 0
    j: int = 0
    position: int = 0
    count: int = 1
    indices: tuple = ()
    spatial_kind: str = ""
    severity: float = 0.0

    @classmethod
    def from_json(cls, obj: dict) -> "AttackSpec":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise InvalidSpec(f"attack spec needs a 'kind' field: {obj!r}")
        kind = obj["kind"]
        if kind in SPATIAL_KINDS:  # shorthand {"kind": "blur", ...}
            obj = dict(obj, kind="spatial", spatial_kind=kind)
            kind = "spatial"
        try:
            if kind == "swap":
                return cls(kind=kind, i=int(obj["i"]), j=int(obj["j"]))
            if kind == "insert":
                return cls(kind=kind, position=int(obj["position"]),
                           count=int(obj.get("count", 1)))
            if kind == "drop":
                return cls(kind=kind, indices=tuple(int(x) for x in obj["indices"]))
            if kind == "spatial":
                spec = cls(kind=kind, spatial_kind=obj["spatial_kind"],
                           severity=float(obj["severity"]))
                spec.validate()
                return spec
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpec(f"malformed {kind!r} attack spec: {obj!r}") from exc
        raise InvalidSpec(f"unknown attack kind {kind!r}")

    def validate(self) -> None:
        if self.kind == "spatial":
            if self.spatial_kind not in SPATIAL_KINDS:
                raise InvalidSpec(f"unknown spatial kind {self.spatial_kind!r}")
            if not 0.0 <= self.severity <= 1.0:
                raise InvalidSpec(f"severity must lie in [0, 1], got {self.severity}")
        elif self.kind == "insert":
            if self.count < 1:
                raise InvalidSpec(f"insert count must be >= 1, got {self.count}")


def flip_probability(rho: float) -> float:
    """Per-element sign-flip probability of the rho-fidelity channel."""
    return float(np.arccos(np.clip(rho, -1.0, 1.0)) / np.pi)


def rho_for_flip(p: float) -> float:
    """Inverse of flip_probability."""
    return float(np.cos(np.pi * p))


def invert(latents: np.ndarray, params: ChannelParams) -> np.ndarray:
    """Simulated generation + DDIM inversion round trip.

    Per element: out = rho * in + sqrt(1 - rho^2) * xi, xi fresh N(0, 1);
    frame i uses the substream (params.seed, i).
    """
    params.validate()
    latents = np.asarray(latents, dtype=np.float64)
    out = np.empty_like(latents)
    for i in range(latents.shape[0]):
        rho = 0.0 if (params.i2v_first_frame and i == 0) else params.rho
        xi = spawn(params.seed, 0x1CC, i).standard_normal(latents.shape[1:])
        out[i] = rho * latents[i] + np.sqrt(1.0 - rho * rho) * xi
    if params.mode == "hard":
        out = np.where(out < 0, -1.0, 1.0)
    return out


def apply_spatial(params: ChannelParams, spec: AttackSpec) -> ChannelParams:
    """Spatial attacks degrade inversion fidelity: rho *= 1 - kappa * severity."""
    if spec.kind != "spatial":
        raise InvalidSpec(f"apply_spatial got non-spatial kind {spec.kind!r}")
    spec.validate()
    kappa = SPATIAL_KAPPA[spec.spatial_kind]
    return replace(params, rho=params.rho * (1.0 - kappa * spec.severity))


def _index_map(spec: AttackSpec, frames: int) -> list:
    """New-position -> old-position map; -1 marks freshly inserted frames."""
    if spec.kind == "swap":
        if not (0 <= spec.i < frames and 0 <= spec.j < frames):
            raise IndexError(f"swap({spec.i}, {spec.j}) out of range for {frames} frames")
        order = list(range(frames))
        order[spec.i], order[spec.j] = order[spec.j], order[spec.i]
        return order
    if spec.kind == "drop":
        for idx in spec.indices:
            if not 0 <= idx < frames:
                raise IndexError(f"drop index {idx} out of range for {frames} frames")
        dropped = set(spec.indices)
        kept = [i for i in range(frames) if i not in dropped]
        if not kept:
            raise IndexError("drop spec removes every frame")
        return kept
    if spec.kind == "insert":
        if not 0 <= spec.position <= frames:
            raise IndexError(
                f"insert position {spec.position} out of range for {frames} frames"
            )
        spec.validate()
        return (
            list(range(spec.position))
            + [-1] * spec.count
            + list(range(spec.position, frames))
        )
    raise InvalidSpec(f"apply_temporal got non-temporal kind {spec.kind!r}")


def _fresh_entry(template: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Splice content: plain Gaussian for latents, random bits for messages."""
    if np.issubdtype(template.dtype, np.floating):
        return rng.standard_normal(template.shape)
    return rng.integers(0, 2, size=template.shape, dtype=template.dtype)


def apply_temporal(
    sequence: np.ndarray,
    spec: AttackSpec,
    rng: np.random.Generator,
    provenance: Optional[Sequence[int]] = None,
) -> tuple[np.ndarray, list]:
    """Apply a swap/drop/insert attack to a frame-indexed array.

    Returns (new_sequence, provenance) where provenance[i] is the original
    frame index feeding new position i, or -1 for inserted content. Pass the
    previous provenance to compose attacks.
    """
    sequence = np.asarray(sequence)
    frames = sequence.shape[0]
    if provenance is None:
        provenance = list(range(frames))
    mapping = _index_map(spec, frames)
    out = np.empty((len(mapping),) + sequence.shape[1:], dtype=sequence.dtype)
    new_prov = []
    for pos, src in enumerate(mapping):
        if src < 0:
            out[pos] = _fresh_entry(sequence[0], rng)
            new_prov.append(-1)
        else:
            out[pos] = sequence[src]
            new_prov.append(provenance[src])
    return out, new_prov
