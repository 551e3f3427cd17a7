"""Extended message list and per-video window assignment.

The schedule is an L x k_msg bit matrix of pairwise-distinct frame messages,
fully derived from (seed, L, k_msg) so a verifier only needs the seed. Each
video embeds a contiguous window starting at a uniform random index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import spawn
from .errors import DuplicateCollision, InvalidParams, LengthError

_DEDUP_RETRIES = 64


@dataclass
class MessageSchedule:
    entries: np.ndarray  # (L, k_msg) uint8 bits
    rng_seed: int

    @property
    def length(self) -> int:
        return self.entries.shape[0]

    @property
    def k_msg(self) -> int:
        return self.entries.shape[1]


@dataclass
class WindowAssignment:
    start: int
    messages: np.ndarray  # (f, k_msg) slice of the schedule

    @property
    def frames(self) -> int:
        return self.messages.shape[0]


def build_schedule(length: int, k_msg: int, seed: int) -> MessageSchedule:
    """L distinct uniform-random messages; deterministic in the seed."""
    if length < 2:
        raise InvalidParams(f"schedule length must be >= 2, got {length}")
    if k_msg < 1:
        raise InvalidParams(f"k_msg must be >= 1, got {k_msg}")
    if length > 2**min(k_msg, 62):
        raise DuplicateCollision(
            f"{length} distinct messages cannot exist at k_msg = {k_msg}"
        )
    rng = spawn(seed, 0x5C4E)
    entries = rng.integers(0, 2, size=(length, k_msg), dtype=np.uint8)
    for _ in range(_DEDUP_RETRIES):
        _, first = np.unique(entries, axis=0, return_index=True)
        if first.shape[0] == length:
            return MessageSchedule(entries=entries, rng_seed=int(seed))
        dup = np.setdiff1d(np.arange(length), first)
        entries[dup] = rng.integers(0, 2, size=(dup.shape[0], k_msg), dtype=np.uint8)
    raise DuplicateCollision(
        f"could not sample {length} distinct {k_msg}-bit messages"
    )


def assign_window(
    schedule: MessageSchedule, frames: int, rng: np.random.Generator
) -> WindowAssignment:
    """Uniform start over [0, L - f]; messages are the contiguous slice."""
    if frames < 1:
        raise LengthError("window needs at least one frame")
    if frames > schedule.length - 1:
        raise LengthError(
            f"f = {frames} violates the schedule contract L > f (L = {schedule.length})"
        )
    start = int(rng.integers(0, schedule.length - frames + 1))
    return WindowAssignment(start=start, messages=schedule.entries[start : start + frames].copy())
