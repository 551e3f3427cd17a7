"""Probe 3: real-code waterfall with the {2,6} variable-degree profile."""
import time

import numpy as np

from prcmark._rng import spawn
from prcmark import gf2
from prcmark.prc import PrcParams, PrcKey, encode, _pack_parity


def sample_26(n, r, t, rng):
    total = r * t
    leftover = (total - 2 * n) % 4
    b = (total - 2 * n - leftover) // 4
    degrees = np.full(n, 2, dtype=np.int64)
    chosen = rng.choice(n, size=b + leftover, replace=False)
    degrees[chosen[:b]] = 6
    degrees[chosen[b:]] = 3
    pool = np.repeat(np.arange(n, dtype=np.int32), degrees)
    rng.shuffle(pool)
    rows = pool.reshape(r, t)
    for _ in range(200):
        srt = np.sort(rows, axis=1)
        bad = np.nonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))[0]
        if bad.size == 0:
            break
        for i in bad:
            j = int(rng.integers(r))
            a_, b_ = int(rng.integers(t)), int(rng.integers(t))
            rows[i, a_], rows[j, b_] = rows[j, b_], rows[i, a_]
    return rows


def build_key(params, seed):
    n, r, t = params.n, params.r, params.t
    rng = spawn(seed, 0x6B65)
    parity_cols = sample_26(n, r, t, rng)
    packed = _pack_parity(parity_cols, n)
    rank, pivot_cols = gf2.rref(packed, n)
    g = n - rank
    free_cols = np.setdiff1d(np.arange(n, dtype=np.int64), pivot_cols)
    gen_bits = np.zeros((n, g), dtype=np.uint8)
    gen_bits[free_cols, np.arange(g)] = 1
    reduced = (packed[:rank][:, (free_cols >> 3)] >> (7 - (free_cols & 7)).astype(np.uint8)) & 1
    gen_bits[pivot_cols] = reduced
    gen_cols = gf2.pack_rows(np.ascontiguousarray(gen_bits.T))
    otp = rng.integers(0, 2, size=n, dtype=np.uint8)
    print(f"g={g}")
    return PrcKey(params=params, parity_cols=parity_cols, gen_cols=gen_cols,
                  pivot_rows=free_cols, otp=otp, key_id="x", rng_seed=seed)


def bp_stats(key, flip, clamp, max_iters, i):
    p = key.params
    rng = spawn(555, i, int(flip * 10000))
    m = rng.integers(0, 2, size=p.k_msg, dtype=np.uint8)
    c = encode(key, m, rng).astype(np.float64)
    c[rng.random(p.n) < flip] *= -1
    s = c * key.otp_signs
    llr = 2.0 * np.arctanh(np.clip(s, -clamp, clamp))
    parity_cols, flat = key.parity_cols, key._flat_cols
    n, (r, t) = p.n, parity_cols.shape
    m_cv = np.zeros((r, t))
    sat = 0
    for it in range(1, max_iters + 1):
        totals = llr + np.bincount(flat, weights=m_cv.ravel(), minlength=n)
        m_vc = totals[parity_cols] - m_cv
        th = np.tanh(0.5 * m_vc)
        left = np.ones_like(th); right = np.ones_like(th)
        np.cumprod(th[:, :-1], axis=1, out=left[:, 1:])
        np.cumprod(th[:, -1:0:-1], axis=1, out=right[:, -2::-1])
        m_cv = 2.0 * np.arctanh(np.clip(left * right, -(1-1e-15), 1-1e-15))
        post = llr + np.bincount(flat, weights=m_cv.ravel(), minlength=n)
        hard = (post < 0).astype(np.uint8)
        sat = int(r - (hard[parity_cols].sum(axis=1) & 1).sum())
        if sat == r:
            break
    u = hard[key.pivot_rows]
    ok = sat == r and np.array_equal(u[:p.k_msg], m)
    # OSD-0 viability: are the 576 most reliable posterior bits all correct?
    truth = (encode_bits_of(key, m, i, flip) ).astype(np.uint8)
    err = hard != truth
    order = np.argsort(-np.abs(post))
    top_err = int(err[order[:key.g]].sum())
    return ok, it, sat / r, float(err.mean()), top_err


def encode_bits_of(key, m, i, flip):
    p = key.params
    rng = spawn(555, i, int(flip * 10000))
    m2 = rng.integers(0, 2, size=p.k_msg, dtype=np.uint8)
    c = encode(key, m2, rng)
    return (np.asarray(c) < 0).astype(np.uint8) ^ key.otp  # otp-removed true bits


params = PrcParams(n=16384, k_msg=512, k_pad=64, t=3, fpr=1e-6)
t0 = time.time()
key = build_key(params, seed=11)
print(f"build {time.time()-t0:.1f}s")
for clamp in (0.42, 0.55):
    for flip in (0.28, 0.30, 0.31, 0.32, 0.33):
        t0 = time.time()
        rows = [bp_stats(key, flip, clamp, 250, i) for i in range(20)]
        ok = np.mean([r[0] for r in rows])
        iters = np.mean([r[1] for r in rows])
        sat = np.mean([r[2] for r in rows])
        errs = np.mean([r[3] for r in rows])
        top = np.mean([r[4] for r in rows])
        print(f"clamp={clamp} flip={flip}: ok={ok:.2f} iters={iters:.0f} sat={sat:.3f} "
              f"err={errs:.3f} topG_err={top:.1f} ({time.time()-t0:.0f}s)")
