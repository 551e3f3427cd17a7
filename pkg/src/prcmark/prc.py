"""Pseudorandom error-correcting code over a sparse parity-check ensemble.

A key holds a secret sparse parity-check matrix P (r rows, each of weight
exactly t over n bit positions), a generator G whose columns span null(P),
a fixed invertible row subset of G used for message recovery, and a one-time
pad z that makes individual codewords marginally uniform. Encoding maps
(message || random pad) through G, XORs z and optional Bernoulli noise, and
emits a +-1 vector. Decoding removes the pad, runs sum-product belief
propagation on the sparse checks, and accepts when the fraction of satisfied
checks clears a binomial false-positive bound.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.stats import binom

from . import gf2
from ._rng import spawn
from .errors import DimensionError, InvalidParams, LengthError

_KEYGEN_RETRIES = 8
_ATANH_MAX = 1.0 - 1e-15
# BP is abandoned once the satisfied-check count has not improved for this
# many iterations while still inside the null band (saves ~10x on
# unwatermarked inputs without touching decodable ones).
_STALL_ITERS = 12
_STALL_BAND = 0.66
# Reliability-based recovery is only attempted when BP shows real signal.
_OSD_BAND = 0.55


@dataclass
class PrcParams:
    """Code parameters. r=None resolves to n - k_msg - k_pad (maximal checks)."""

    n: int
    k_msg: int = 512
    k_pad: int = 64
    r: Optional[int] = None
    t: int = 3
    eta: float = 0.0
    fpr: float = 1e-6
    max_bp_iters: int = 100
    # Soft-input clamp doubles as the assumed-channel confidence; 0.38 is
    # matched to the ~0.3 flip regime and measurably beats near-1 clamps.
    llr_clamp: float = 0.38

    def __post_init__(self):
        if self.r is None:
            self.r = max(0, self.n - self.k_msg - self.k_pad)

    def validate(self) -> None:
        if self.n < 1:
            raise InvalidParams(f"n must be positive, got {self.n}")
        if self.k_msg < 1:
            raise InvalidParams(f"k_msg must be positive, got {self.k_msg}")
        if self.k_pad < 0:
            raise InvalidParams(f"k_pad must be non-negative, got {self.k_pad}")
        if self.k_msg + self.k_pad > self.n:
            raise InvalidParams(
                f"k_msg + k_pad = {self.k_msg + self.k_pad} exceeds n = {self.n}"
            )
        if self.r < 0:
            raise InvalidParams(f"r must be non-negative, got {self.r}")
        if self.t < 2:
            raise InvalidParams(f"t must be at least 2, got {self.t}")
        if self.r > 0 and self.t > self.n:
            raise InvalidParams(f"t = {self.t} exceeds n = {self.n}")
        if not 0.0 <= self.eta < 0.5:
            raise InvalidParams(f"eta must lie in [0, 0.5), got {self.eta}")
        if not 0.0 < self.fpr < 1.0:
            raise InvalidParams(f"fpr must lie in (0, 1), got {self.fpr}")
        if self.max_bp_iters < 1:
            raise InvalidParams(f"max_bp_iters must be >= 1, got {self.max_bp_iters}")
        if not 0.0 < self.llr_clamp < 1.0:
            raise InvalidParams(f"llr_clamp must lie in (0, 1), got {self.llr_clamp}")


@dataclass
class DecodeOutcome:
    """Result of a single-frame decode; message is None when rejected."""

    message: Optional[np.ndarray]
    parity_satisfaction: float
    bp_iterations: int
    converged: bool
    signal_agreement: float


@dataclass
class PrcKey:
    params: PrcParams
    parity_cols: np.ndarray  # (r, t) int32, column indices of the ones per check
    gen_cols: np.ndarray  # (g, n/8) packed uint8, column j of G as a bit row
    pivot_rows: np.ndarray  # (g,) int64 rows of G forming an invertible submatrix
    otp: np.ndarray  # (n,) uint8 one-time pad bits
    key_id: str
    rng_seed: int
    schedule_seed: int = 0
    schedule_len: int = 256
    # derived caches
    otp_signs: np.ndarray = field(init=False, repr=False)
    accept_count: int = field(init=False)
    _flat_cols: np.ndarray = field(init=False, repr=False)
    _pivot_identity: bool = field(init=False, repr=False)
    _pivot_inv: Optional[np.ndarray] = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.otp_signs = 1.0 - 2.0 * self.otp.astype(np.float64)
        self.accept_count = required_satisfied_checks(self.params.r, self.params.fpr)
        self._flat_cols = self.parity_cols.ravel().astype(np.int64)
        self._pivot_identity = self._check_pivot_identity()

    @property
    def g(self) -> int:
        return self.gen_cols.shape[0]

    @property
    def n(self) -> int:
        return self.params.n

    def _pivot_submatrix(self, lo: int, hi: int) -> np.ndarray:
        """Bits G[pivot_rows, lo:hi], shape (g, hi-lo)."""
        bytes_idx = (self.pivot_rows >> 3).astype(np.int64)
        shifts = (7 - (self.pivot_rows & 7)).astype(np.uint8)
        return (self.gen_cols[lo:hi][:, bytes_idx] >> shifts).T & 1

    def _check_pivot_identity(self) -> bool:
        # Keys made by keygen() use the free columns as pivots, where G is the
        # identity; foreign keys fall back to an explicit GF(2) inversion.
        g = self.g
        step = max(1, (1 << 23) // max(1, g))
        for lo in range(0, g, step):
            hi = min(g, lo + step)
            expect = np.zeros((g, hi - lo), dtype=np.uint8)
            expect[np.arange(lo, hi), np.arange(hi - lo)] = 1
            if not np.array_equal(self._pivot_submatrix(lo, hi), expect):
                return False
        return True

    def pivot_inverse(self) -> np.ndarray:
        if self._pivot_inv is None:
            sub_bits = self._pivot_submatrix(0, self.g).T  # rows of G at pivots
            self._pivot_inv = gf2.inverse(gf2.pack_rows(sub_bits), self.g)
        return self._pivot_inv

    def solve_message_bits(self, hard_bits: np.ndarray) -> np.ndarray:
        """Recover u from hard codeword bits via the pivot rows."""
        picked = hard_bits[self.pivot_rows].astype(np.uint8)
        if self._pivot_identity:
            return picked
        return gf2.matvec(self.pivot_inverse(), gf2.pack_rows(picked))

    def reencode_bits(self, u: np.ndarray) -> np.ndarray:
        """G @ u as unpacked bits (no pad, no noise)."""
        packed = gf2.xor_select(self.gen_cols, u)
        return gf2.unpack_rows(packed, self.n)


def required_satisfied_checks(r: int, fpr: float) -> int:
    """Smallest count k with P[Binomial(r, 1/2) >= k] <= fpr (0 when r == 0).

    May exceed r (never accept) when fpr is below 2^-r.
    """
    if r == 0:
        return 0
    k = int(binom.isf(fpr, r, 0.5)) + 1
    while k > 1 and binom.sf(k - 2, r, 0.5) <= fpr:
        k -= 1
    while k <= r and binom.sf(k - 1, r, 0.5) > fpr:
        k += 1
    return k


def _repair_duplicate_columns(rows: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    r, t = rows.shape
    for _ in range(200):
        srt = np.sort(rows, axis=1)
        bad = np.nonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))[0]
        if bad.size == 0:
            return rows
        for i in bad:
            j = int(rng.integers(r))
            a = int(rng.integers(t))
            b = int(rng.integers(t))
            rows[i, a], rows[j, b] = rows[j, b], rows[i, a]
    srt = np.sort(rows, axis=1)
    bad = np.nonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))[0]
    for i in bad:  # stubborn rows: resample outright
        rows[i] = rng.choice(n, size=t, replace=False).astype(rows.dtype)
    return rows


def _sample_parity_cols(n: int, r: int, t: int, rng: np.random.Generator) -> np.ndarray:
    """r rows of t distinct columns each.

    When the mean column degree r*t/n lands in [2, 6] (the watermarking
    regime), columns are split into degree-2 variables laid out as one long
    accumulator chain through the checks plus degree-6 hubs; the chain removes
    the short cycles that otherwise trap belief propagation, and the {2,6}
    profile sits near the density-evolution optimum for weight-t checks.
    Other regimes fall back to near-regular degrees.
    """
    if r == 0:
        return np.zeros((0, t), dtype=np.int32)
    total = r * t
    avg = total / n
    if t >= 3 and 2.0 <= avg <= 6.0:
        rows = _sample_chain_profile(n, r, t, rng)
    else:
        base, extra = divmod(total, n)
        degrees = np.full(n, base, dtype=np.int64)
        if extra:
            degrees[rng.choice(n, size=extra, replace=False)] += 1
        pool = np.repeat(np.arange(n, dtype=np.int32), degrees)
        rng.shuffle(pool)
        rows = pool.reshape(r, t)
    return _repair_duplicate_columns(rows, n, rng)


def _sample_chain_profile(n: int, r: int, t: int, rng: np.random.Generator) -> np.ndarray:
    total = r * t
    leftover = (total - 2 * n) % 4
    n6 = (total - 2 * n - leftover) // 4
    n3 = leftover
    n2 = n - n6 - n3
    cols = rng.permutation(n)
    deg2, deg6, deg3 = cols[:n2], cols[n2 : n2 + n6], cols[n2 + n6 :]
    rows = np.full((r, t), -1, dtype=np.int64)
    slots = np.full(r, t, dtype=np.int64)
    perm = rng.permutation(r)
    m = min(n2, r - 1)
    for i in range(m):
        for check in (perm[i], perm[i + 1]):
            rows[check, t - slots[check]] = deg2[i]
            slots[check] -= 1
    pool = np.concatenate(
        [np.repeat(deg2[m:], 2), np.repeat(deg6, 6), np.repeat(deg3, 3)]
    )
    rng.shuffle(pool)
    free_slots = np.repeat(np.arange(r), slots)
    for k in range(free_slots.shape[0]):
        check = free_slots[k]
        rows[check, t - slots[check]] = pool[k]
        slots[check] -= 1
    return rows.astype(np.int32)


def _pack_parity(parity_cols: np.ndarray, n: int) -> np.ndarray:
    r = parity_cols.shape[0]
    packed = np.zeros((r, gf2.packed_width(n)), dtype=np.uint8)
    rows = np.repeat(np.arange(r), parity_cols.shape[1])
    cols = parity_cols.ravel().astype(np.int64)
    np.bitwise_or.at(packed, (rows, cols >> 3), (1 << (7 - (cols & 7))).astype(np.uint8))
    return packed


def keygen(params: PrcParams, seed: int) -> PrcKey:
    """Generate a key; deterministic in (params, seed)."""
    params.validate()
    n, r, t = params.n, params.r, params.t
    need = params.k_msg + params.k_pad
    rng = spawn(seed, 0x6B65)
    for attempt in range(_KEYGEN_RETRIES):
        parity_cols = _sample_parity_cols(n, r, t, rng)
        packed = _pack_parity(parity_cols, n)
        rank, pivot_cols = gf2.rref(packed, n)
        g = n - rank
        if g >= need:
            break
    else:
        raise DimensionError(
            f"null space dimension stayed below k_msg + k_pad = {need}; r = {r} is "
            f"too large for n = {n}"
        )
    free_cols = np.setdiff1d(np.arange(n, dtype=np.int64), pivot_cols)
    # Null basis vector j: 1 at free column j, RREF column entries at pivots.
    gen_bits = np.zeros((n, g), dtype=np.uint8)
    gen_bits[free_cols, np.arange(g)] = 1
    if rank:
        reduced_cols = (
            packed[:rank][:, (free_cols >> 3)] >> (7 - (free_cols & 7)).astype(np.uint8)
        ) & 1
        gen_bits[pivot_cols] = reduced_cols
    gen_cols = gf2.pack_rows(np.ascontiguousarray(gen_bits.T))
    otp = rng.integers(0, 2, size=n, dtype=np.uint8)
    _assert_null_space(parity_cols, gen_bits)
    digest = hashlib.sha256(
        repr((n, params.k_msg, params.k_pad, r, t, params.eta, int(seed))).encode()
    ).hexdigest()[:16]
    return PrcKey(
        params=params,
        parity_cols=parity_cols,
        gen_cols=gen_cols,
        pivot_rows=free_cols,
        otp=otp,
        key_id=digest,
        rng_seed=int(seed),
    )


def _assert_null_space(parity_cols: np.ndarray, gen_bits: np.ndarray) -> None:
    if parity_cols.shape[0] == 0:
        return
    g = gen_bits.shape[1]
    step = max(1, min(g, (1 << 24) // max(1, parity_cols.size)))
    for lo in range(0, g, step):
        block = gen_bits[:, lo : lo + step]
        synd = block[parity_cols].sum(axis=1) & 1
        if synd.any():
            raise AssertionError("parity @ generator != 0")


def bits_to_pm1(bits: np.ndarray) -> np.ndarray:
    """0 -> +1, 1 -> -1."""
    return (1 - 2 * bits.astype(np.int8)).astype(np.int8)


def pm1_to_bits(values: np.ndarray) -> np.ndarray:
    """Signs to bits; zero and positive map to bit 0."""
    return (np.asarray(values) < 0).astype(np.uint8)


def encode(key: PrcKey, message: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Map a k_msg-bit message to a +-1 codeword of length n."""
    message = np.asarray(message, dtype=np.uint8).ravel()
    p = key.params
    if message.shape[0] != p.k_msg:
        raise LengthError(f"message has {message.shape[0]} bits, expected {p.k_msg}")
    u = np.zeros(key.g, dtype=np.uint8)
    u[: p.k_msg] = message & 1
    if p.k_pad:
        u[p.k_msg : p.k_msg + p.k_pad] = rng.integers(0, 2, size=p.k_pad, dtype=np.uint8)
    bits = key.reencode_bits(u)
    bits ^= key.otp
    if p.eta > 0.0:
        bits ^= (rng.random(p.n) < p.eta).astype(np.uint8)
    return bits_to_pm1(bits)


def _sum_product(
    parity_cols: np.ndarray,
    flat_cols: np.ndarray,
    llr: np.ndarray,
    max_iters: int,
) -> tuple[np.ndarray, int, int, np.ndarray]:
    """Flooding sum-product BP.

    Returns (hard_bits, satisfied_checks, iterations, posterior_llr).
    """
    n = llr.shape[0]
    r, t = parity_cols.shape
    hard = (llr < 0).astype(np.uint8)
    sat = int(r - (hard[parity_cols].sum(axis=1) & 1).sum())
    if sat == r:
        return hard, sat, 0, llr
    m_cv = np.zeros((r, t), dtype=np.float64)
    post = llr
    best, stall = sat, 0
    gain = max(1, r // 512)
    it = 0
    for it in range(1, max_iters + 1):
        totals = llr + np.bincount(flat_cols, weights=m_cv.ravel(), minlength=n)
        m_vc = totals[parity_cols] - m_cv
        th = np.tanh(0.5 * m_vc)
        left = np.ones_like(th)
        right = np.ones_like(th)
        np.cumprod(th[:, :-1], axis=1, out=left[:, 1:])
        np.cumprod(th[:, -1:0:-1], axis=1, out=right[:, -2::-1])
        m_cv = 2.0 * np.arctanh(np.clip(left * right, -_ATANH_MAX, _ATANH_MAX))
        post = llr + np.bincount(flat_cols, weights=m_cv.ravel(), minlength=n)
        hard = (post < 0).astype(np.uint8)
        sat = int(r - (hard[parity_cols].sum(axis=1) & 1).sum())
        if sat == r:
            break
        if sat > best + gain:
            best, stall = sat, 0
        else:
            stall += 1
            if stall >= _STALL_ITERS and best < _STALL_BAND * r:
                break
    return hard, sat, it, post


@njit(cache=True)
def _osd_solve(gen_cols: np.ndarray, order: np.ndarray, received: np.ndarray, g: int):
    """Solve G[S] u = received[S] on the most reliable independent set S.

    gen_cols holds the columns of G as packed n-bit rows; `order` ranks signal
    positions by descending reliability. Returns the solved u (length g).
    """
    width = (g + 7) // 8
    red = np.zeros((g, width), dtype=np.uint8)
    aug = np.zeros(g, dtype=np.uint8)
    have = np.zeros(g, dtype=np.uint8)
    v = np.zeros(width, dtype=np.uint8)
    found = 0
    for oi in range(order.shape[0]):
        idx = order[oi]
        byte = idx >> 3
        shift = 7 - (idx & 7)
        for k in range(width):
            v[k] = 0
        for j in range(g):
            if (gen_cols[j, byte] >> shift) & 1:
                v[j >> 3] |= np.uint8(1 << (7 - (j & 7)))
        a = received[idx]
        for b in range(g):
            if (v[b >> 3] >> (7 - (b & 7))) & 1 and have[b]:
                for k in range(width):
                    v[k] ^= red[b, k]
                a ^= aug[b]
        lead = -1
        for b in range(g):
            if (v[b >> 3] >> (7 - (b & 7))) & 1:
                lead = b
                break
        if lead < 0:
            continue
        lb = lead >> 3
        ls = 7 - (lead & 7)
        for b in range(g):
            if have[b] and ((red[b, lb] >> ls) & 1):
                for k in range(width):
                    red[b, k] ^= v[k]
                aug[b] ^= a
        for k in range(width):
            red[lead, k] = v[k]
        aug[lead] = a
        have[lead] = 1
        found += 1
        if found == g:
            break
    return aug, found


def osd_agreement_count(n: int, g: int, fpr: float) -> int:
    """Union-bound agreement needed to accept a reliability-solved codeword.

    P[some of the 2^g codewords agrees with n random signs on >= k positions]
    <= 2^g exp(-2 (k - n/2)^2 / n) <= fpr.
    """
    k = int(np.ceil(n / 2.0 + np.sqrt(n * (g * np.log(2.0) + np.log(1.0 / fpr)) / 2.0)))
    return k


def decode(key: PrcKey, signal: np.ndarray) -> DecodeOutcome:
    """Soft-decision decode of a length-n signal with values in [-1, 1].

    Runs sum-product BP on the sparse checks; accepts on the binomial
    satisfied-check bound. When BP stalls short of a codeword but clearly
    above the null band, a reliability-ordered solve over G is attempted and
    accepted on a union-bound agreement test at the same fpr.
    """
    values = np.asarray(signal, dtype=np.float64).ravel()
    p = key.params
    if values.shape[0] != p.n:
        raise LengthError(f"signal has {values.shape[0]} elements, expected {p.n}")
    unmasked = values * key.otp_signs
    llr = 2.0 * np.arctanh(np.clip(unmasked, -p.llr_clamp, p.llr_clamp))
    if p.r == 0:
        hard = (llr < 0).astype(np.uint8)
        u = key.solve_message_bits(hard)
        return DecodeOutcome(u[: p.k_msg], 1.0, 0, True, 1.0)
    hard, sat, iters, post = _sum_product(
        key.parity_cols, key._flat_cols, llr, p.max_bp_iters
    )
    satisfaction = sat / p.r
    received = (unmasked < 0).astype(np.uint8)
    if sat >= key.accept_count:
        u = key.solve_message_bits(hard)
        agreement = float(np.mean(key.reencode_bits(u) == received))
        return DecodeOutcome(u[: p.k_msg], satisfaction, iters, True, agreement)
    if sat >= _OSD_BAND * p.r:
        need = osd_agreement_count(p.n, key.g, p.fpr)
        if need <= p.n:
            order = np.argsort(-np.abs(post)).astype(np.int64)
            u, found = _osd_solve(key.gen_cols, order, received, key.g)
            if found == key.g:
                bits = key.reencode_bits(u)
                agree = int((bits == received).sum())
                if agree >= need:
                    # the decision word is a codeword: all checks satisfied
                    return DecodeOutcome(
                        u[: p.k_msg], 1.0, iters, True, agree / p.n
                    )
    u = key.solve_message_bits(hard)
    agreement = float(np.mean(key.reencode_bits(u) == received))
    return DecodeOutcome(None, satisfaction, iters, False, agreement)


def detect_zero_bit(key: PrcKey, signal: np.ndarray) -> tuple[float, bool]:
    """Presence test from raw check satisfaction, without running BP."""
    values = np.asarray(signal, dtype=np.float64).ravel()
    p = key.params
    if values.shape[0] != p.n:
        raise LengthError(f"signal has {values.shape[0]} elements, expected {p.n}")
    if p.r == 0:
        return 1.0, True
    bits = (values * key.otp_signs < 0).astype(np.uint8)
    sat = int(p.r - (bits[key.parity_cols].sum(axis=1) & 1).sum())
    return sat / p.r, sat >= key.accept_count
