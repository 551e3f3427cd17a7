"""Edit-distance temporal matching and rank-test detection.

Frame messages are 0/1 uint8 arrays. The alignment cost model rewards
matches: substituting reference entry i for decoded frame j costs
d_N = 2 (d_H - 0.5) in [-1, 1] (-1 for identical messages), an undecodable
frame substitutes at +1, and insertions/deletions cost +1. All dynamic
programming runs on costs scaled by k_msg so arithmetic and tie-breaking are
exact integers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import InvalidParams, LengthError, ShapeMismatch
from .gf2 import POPCOUNT
from .latents import extract_signs
from .prc import PrcKey, decode
from .schedule import MessageSchedule

DecodedSequence = List[Optional[np.ndarray]]

_DIAG, _INS, _DEL = 0, 1, 2


def hamming(a: np.ndarray, b: np.ndarray) -> float:
    """Fraction of differing bit positions."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape[0] != b.shape[0]:
        raise LengthError(f"length mismatch {a.shape[0]} != {b.shape[0]}")
    return float(np.mean((a & 1) != (b & 1)))


def normalized_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Affine rescale of the Hamming fraction to [-1, 1]; -1 iff identical."""
    return 2.0 * (hamming(a, b) - 0.5)


@dataclass
class AlignmentPath:
    start: int
    ops: list  # ("match"|"substitute", ref_i, dec_j) | ("insert", dec_j) | ("delete", ref_i)
    cost: float


@dataclass
class DetectionReport:
    edit_distance: float
    null_distances: np.ndarray
    p_value: float
    decision: bool
    tau: float
    recovered: Optional[list] = None
    alignment: Optional[AlignmentPath] = None
    matching_accuracy: Optional[float] = None

    def to_json(self) -> str:
        def hex_msg(m):
            return np.packbits(np.asarray(m, dtype=np.uint8)).tobytes().hex()

        obj = {
            "edit_distance": self.edit_distance,
            "null_distances": [float(d) for d in self.null_distances],
            "p_value": self.p_value,
            "decision": bool(self.decision),
            "tau": self.tau,
            "recovered": None
            if self.recovered is None
            else [hex_msg(m) for m in self.recovered],
            "alignment": None
            if self.alignment is None
            else {
                "start": self.alignment.start,
                "cost": self.alignment.cost,
                "ops": [list(op) for op in self.alignment.ops],
            },
            "matching_accuracy": self.matching_accuracy,
        }
        return json.dumps(obj, indent=2)


def decode_video(key: PrcKey, latents: np.ndarray) -> DecodedSequence:
    """Per-frame PRC decode of a (f, c, h, w) video; None marks rejections."""
    latents = np.asarray(latents)
    if latents.ndim != 4:
        raise ShapeMismatch(f"expected (f, c, h, w), got {latents.shape}")
    if int(np.prod(latents.shape[1:])) != key.params.n:
        raise ShapeMismatch(
            f"frame has {int(np.prod(latents.shape[1:]))} elements, key expects {key.params.n}"
        )
    out: DecodedSequence = []
    for frame in latents:
        outcome = decode(key, extract_signs(frame))
        out.append(outcome.message)
    return out


def _pack_messages(messages: Sequence[np.ndarray], k: int) -> np.ndarray:
    arr = np.asarray(messages, dtype=np.uint8).reshape(len(messages), k)
    return np.packbits(arr, axis=1)


def _sub_costs_scaled(
    ref_packed: np.ndarray, decoded: DecodedSequence, k: int
) -> np.ndarray:
    """Scaled substitution costs (m, f): 2 * hamming_count - k; null entries +k."""
    m = ref_packed.shape[0]
    f = len(decoded)
    costs = np.full((m, f), k, dtype=np.int64)
    live = [j for j, d in enumerate(decoded) if d is not None]
    if live:
        for j in live:
            d = np.asarray(decoded[j], dtype=np.uint8).ravel()
            if d.shape[0] != k:
                raise LengthError(f"decoded frame {j} has {d.shape[0]} bits, expected {k}")
        dec_packed = _pack_messages([decoded[j] for j in live], k)
        ham = POPCOUNT[ref_packed[:, None, :] ^ dec_packed[None, :, :]].sum(
            axis=2, dtype=np.int64
        )
        costs[:, live] = 2 * ham - k
    return costs


def _dp_scaled(
    sub: np.ndarray,
    k: int,
    free_ref_prefix: bool = False,
    free_ref_suffix: bool = False,
) -> tuple[int, int, np.ndarray]:
    """Scalar DP. Returns (best_cost, best_ref_end, pointers (m+1, f+1))."""
    m, f = sub.shape
    gap = k
    d = np.empty((m + 1, f + 1), dtype=np.int64)
    ptr = np.zeros((m + 1, f + 1), dtype=np.uint8)
    d[0, 0] = 0
    for i in range(1, m + 1):
        d[i, 0] = 0 if free_ref_prefix else i * gap
        ptr[i, 0] = _DEL
    for j in range(1, f + 1):
        d[0, j] = j * gap
        ptr[0, j] = _INS
    for i in range(1, m + 1):
        row_sub = sub[i - 1]
        for j in range(1, f + 1):
            diag = d[i - 1, j - 1] + row_sub[j - 1]
            ins = d[i, j - 1] + gap
            dele = d[i - 1, j] + gap
            # preference on ties: diagonal, then insert, then delete
            best, which = diag, _DIAG
            if ins < best:
                best, which = ins, _INS
            if dele < best:
                best, which = dele, _DEL
            d[i, j] = best
            ptr[i, j] = which
    if free_ref_suffix:
        end = int(np.argmin(d[:, f]))
        return int(d[end, f]), end, ptr
    return int(d[m, f]), m, ptr


def _backtrack(
    ptr: np.ndarray,
    ref_entries: np.ndarray,
    decoded: DecodedSequence,
    sub: np.ndarray,
    ref_end: int,
    k: int,
) -> list:
    ops = []
    i, j = ref_end, len(decoded)
    while i > 0 or j > 0:
        which = ptr[i, j]
        if i > 0 and j > 0 and which == _DIAG:
            exact = decoded[j - 1] is not None and sub[i - 1, j - 1] == -k
            ops.append(("match" if exact else "substitute", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif j > 0 and which == _INS:
            ops.append(("insert", j - 1))
            j -= 1
        else:
            ops.append(("delete", i - 1))
            i -= 1
    ops.reverse()
    return ops


def edit_distance(
    reference: Sequence[np.ndarray],
    decoded: DecodedSequence,
    free_ref_prefix: bool = False,
    free_ref_suffix: bool = False,
) -> tuple[float, list]:
    """Minimal-cost global alignment of a reference window against decoded
    frames. Returns (cost, ops); ops reconstruct the decoded sequence from
    the reference.
    """
    reference = [np.asarray(r, dtype=np.uint8).ravel() for r in reference]
    if not reference:
        raise LengthError("reference must be non-empty")
    k = reference[0].shape[0]
    for r in reference:
        if r.shape[0] != k:
            raise LengthError("reference entries have inconsistent lengths")
    ref_packed = _pack_messages(reference, k)
    sub = _sub_costs_scaled(ref_packed, decoded, k)
    cost, ref_end, ptr = _dp_scaled(sub, k, free_ref_prefix, free_ref_suffix)
    ops = _backtrack(ptr, np.asarray(reference), decoded, sub, ref_end, k)
    return cost / k, ops


def _dp_batch_scaled(sub: np.ndarray, k: int, ref_lens: np.ndarray,
                     free_ref_suffix: bool) -> np.ndarray:
    """Batched DP over B references sharing one decoded sequence.

    sub: (B, m_max, f) scaled substitution costs (rows past ref_lens ignored).
    Returns best scaled cost per batch element.
    """
    b, m_max, f = sub.shape
    gap = k
    big = np.int64(1) << 40
    prev = np.empty((b, f + 1), dtype=np.int64)
    prev[:] = np.arange(f + 1, dtype=np.int64) * gap
    best = prev[:, f].copy() if free_ref_suffix else np.full(b, big, dtype=np.int64)
    for i in range(1, m_max + 1):
        cur = np.empty_like(prev)
        cur[:, 0] = i * gap
        row = sub[:, i - 1, :]
        for j in range(1, f + 1):
            cand = np.minimum(prev[:, j - 1] + row[:, j - 1], prev[:, j] + gap)
            cur[:, j] = np.minimum(cand, cur[:, j - 1] + gap)
        alive = ref_lens >= i
        if free_ref_suffix:
            np.minimum(best, np.where(alive, cur[:, f], big), out=best)
        else:
            exact = ref_lens == i
            best = np.where(exact, cur[:, f], best)
        prev = np.where(alive[:, None], cur, prev)
    if not free_ref_suffix:
        best = np.where(ref_lens == 0, np.int64(f) * gap, best)
    return best


def detect(
    reference: Sequence[np.ndarray],
    decoded: DecodedSequence,
    null_count: int,
    tau: float,
    rng: np.random.Generator,
    free_ref_ends: bool = False,
) -> DetectionReport:
    """Rank-based watermark test.

    Compares the alignment cost of the reference against null costs from
    random message sequences of the same shape; p = rank / N where rank
    counts null costs not exceeding the actual one (ties count, keeping the
    test conservative), clipped to 1.
    """
    if null_count < 1:
        raise InvalidParams(f"null_count must be >= 1, got {null_count}")
    if not 0.0 < tau < 1.0:
        raise InvalidParams(f"tau must lie in (0, 1), got {tau}")
    reference = [np.asarray(r, dtype=np.uint8).ravel() for r in reference]
    if not reference:
        raise LengthError("reference must be non-empty")
    k = reference[0].shape[0]
    m = len(reference)
    f = len(decoded)
    actual_scaled_f, _ = edit_distance(
        reference, decoded, free_ref_prefix=free_ref_ends, free_ref_suffix=free_ref_ends
    )
    actual_scaled = int(round(actual_scaled_f * k))
    # packed null references, all of the reference's shape
    null_bytes = rng.integers(0, 256, size=(null_count, m, (k + 7) // 8), dtype=np.uint8)
    if k % 8:
        null_bytes[..., -1] &= np.uint8(0xFF << (8 - k % 8))
    live = [j for j, d in enumerate(decoded) if d is not None]
    sub = np.full((null_count, m, f), k, dtype=np.int64)
    if live:
        dec_packed = _pack_messages([decoded[j] for j in live], k)
        ham = POPCOUNT[null_bytes[:, :, None, :] ^ dec_packed[None, None, :, :]].sum(
            axis=3, dtype=np.int64
        )
        sub[:, :, live] = 2 * ham - k
    if free_ref_ends:
        # free prefix: emulate by taking the best over suffix starts is not
        # needed for the default window mode; supported via scalar fallback
        null_scaled = np.array(
            [
                int(
                    round(
                        edit_distance(
                            list(nb_bits), decoded, True, True
                        )[0]
                        * k
                    )
                )
                for nb_bits in np.unpackbits(null_bytes, axis=2, count=k)
            ],
            dtype=np.int64,
        )
    else:
        null_scaled = _dp_batch_scaled(
            sub, k, np.full(null_count, m, dtype=np.int64), False
        )
    rank = 1 + int((null_scaled <= actual_scaled).sum())
    p_value = min(1.0, rank / null_count)
    return DetectionReport(
        edit_distance=actual_scaled / k,
        null_distances=null_scaled.astype(np.float64) / k,
        p_value=p_value,
        decision=bool(p_value < tau),
        tau=tau,
    )


@dataclass
class TemporalMatch:
    start: int
    recovered: list
    path: AlignmentPath
    assignment: list  # per decoded frame: schedule index or -1
    matching_accuracy: Optional[float] = None


def temporal_match(
    schedule: MessageSchedule,
    decoded: DecodedSequence,
    slack: int = 8,
    truth: Optional[Sequence[int]] = None,
) -> TemporalMatch:
    """Align decoded frames against the extended list.

    Stage 1 assigns every decodable frame its nearest schedule entry (the
    per-frame index identification); stage 2 searches all start indices with
    a DP alignment whose reference is the slice starting there (plus slack to
    absorb insertions, trailing reference entries free). Recovered messages
    are the schedule entries consumed by match/substitute ops.

    truth[j] gives decoded frame j's real schedule index (-1 for spliced
    frames); when present, matching_accuracy is the fraction of truthful
    frames whose stage-1 assignment agrees.
    """
    if not decoded:
        raise LengthError("decoded sequence is empty")
    entries = schedule.entries
    big_l, k = entries.shape
    f = len(decoded)
    ref_packed = np.packbits(entries, axis=1)
    sub_full = _sub_costs_scaled(ref_packed, decoded, k)  # (L, f)
    # stage 1: nearest schedule entry per decodable frame
    assignment = []
    for j, d in enumerate(decoded):
        if d is None:
            assignment.append(-1)
        else:
            assignment.append(int(np.argmin(sub_full[:, j])))
    # stage 2: exhaustive start search, batched
    m_max = min(big_l, f + slack)
    starts = np.arange(big_l)
    ref_lens = np.minimum(big_l - starts, m_max)
    sub_batch = np.full((big_l, m_max, f), k, dtype=np.int64)
    for s in range(big_l):
        sub_batch[s, : ref_lens[s]] = sub_full[s : s + ref_lens[s]]
    costs = _dp_batch_scaled(sub_batch, k, ref_lens, free_ref_suffix=True)
    start = int(np.argmin(costs))  # ties: smallest start
    ref_len = int(ref_lens[start])
    sub = sub_full[start : start + ref_len]
    cost, ref_end, ptr = _dp_scaled(sub, k, False, True)
    ops = _backtrack(ptr, entries[start : start + ref_len], decoded, sub, ref_end, k)
    recovered = [
        entries[start + op[1]].copy() for op in ops if op[0] in ("match", "substitute")
    ]
    path = AlignmentPath(start=start, ops=ops, cost=cost / k)
    accuracy = None
    if truth is not None:
        scored = [
            int(assignment[j] == truth[j]) for j in range(f) if truth[j] >= 0
        ]
        accuracy = float(np.mean(scored)) if scored else None
    return TemporalMatch(
        start=start,
        recovered=recovered,
        path=path,
        assignment=assignment,
        matching_accuracy=accuracy,
    )
