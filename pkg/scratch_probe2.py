"""Probe 2: iteration cap, damping, and redundant-check gadget construction."""
import time

import numpy as np

from prcmark._rng import spawn
from prcmark import prc
from prcmark.prc import PrcParams, PrcKey, keygen, encode, _pack_parity
from prcmark import gf2


def bp(key, llr, max_iters, damping=0.0):
    parity_cols = key.parity_cols
    flat = key._flat_cols
    n = llr.shape[0]
    r, t = parity_cols.shape
    m_cv = np.zeros((r, t))
    hard = (llr < 0).astype(np.uint8)
    sat = int(r - (hard[parity_cols].sum(axis=1) & 1).sum())
    it = 0
    for it in range(1, max_iters + 1):
        totals = llr + np.bincount(flat, weights=m_cv.ravel(), minlength=n)
        m_vc = totals[parity_cols] - m_cv
        th = np.tanh(0.5 * m_vc)
        left = np.ones_like(th)
        right = np.ones_like(th)
        np.cumprod(th[:, :-1], axis=1, out=left[:, 1:])
        np.cumprod(th[:, -1:0:-1], axis=1, out=right[:, -2::-1])
        new = 2.0 * np.arctanh(np.clip(left * right, -(1 - 1e-15), 1 - 1e-15))
        m_cv = damping * m_cv + (1 - damping) * new if damping else new
        post = llr + np.bincount(flat, weights=m_cv.ravel(), minlength=n)
        hard = (post < 0).astype(np.uint8)
        sat = int(r - (hard[parity_cols].sum(axis=1) & 1).sum())
        if sat == r:
            break
    return hard, sat, it


def trial(key, flip, clamp, max_iters, damping, i):
    p = key.params
    rng = spawn(777, i, int(flip * 10000))
    m = rng.integers(0, 2, size=p.k_msg, dtype=np.uint8)
    c = encode(key, m, rng).astype(np.float64)
    mask = rng.random(p.n) < flip
    c[mask] *= -1
    s = c * key.otp_signs
    llr = 2.0 * np.arctanh(np.clip(s, -clamp, clamp))
    hard, sat, it = bp(key, llr, max_iters, damping)
    u = hard[key.pivot_rows]
    return sat == key.params.r and np.array_equal(u[:p.k_msg], m), it


def sweep(key, label, clamp, max_iters, damping, flips, trials=10):
    for flip in flips:
        t0 = time.time()
        res = [trial(key, flip, clamp, max_iters, damping, i) for i in range(trials)]
        ok = sum(r for r, _ in res) / trials
        iters = np.mean([i for _, i in res])
        print(f"  {label} flip={flip}: ok={ok:.2f} iters={iters:.0f} ({time.time()-t0:.1f}s)")


params = PrcParams(n=16384, k_msg=512, k_pad=64, t=3, fpr=1e-6)
key = keygen(params, seed=7)
print("== near-regular, clamp 0.42, iters 400 ==")
sweep(key, "base", 0.42, 400, 0.0, (0.28, 0.30, 0.32))
print("== damping 0.4 ==")
sweep(key, "damp.4", 0.42, 400, 0.4, (0.28, 0.30, 0.32))


def keygen_gadget(params, seed):
    """n-576 independent rows arranged so each consecutive triple forms a
    triangle (rows {a,b,c},{c,d,e},{e,f,a}); add the dependent sum {b,d,f}."""
    n, t = params.n, params.t
    rng = spawn(seed, 0xAAA)
    r_indep = n - params.k_msg - params.k_pad
    groups = r_indep // 3
    cols = []
    for _ in range(groups):
        six = rng.choice(n, size=6, replace=False)
        a, b, c, d, e, f = six
        cols.append([a, b, c])
        cols.append([c, d, e])
        cols.append([e, f, a])
        cols.append([b, d, f])
    rest = r_indep - groups * 3
    for _ in range(rest):
        cols.append(rng.choice(n, size=3, replace=False))
    parity_cols = np.array(cols, dtype=np.int32)
    packed = _pack_parity(parity_cols, n)
    rank, pivot_cols = gf2.rref(packed, n)
    g = n - rank
    print(f"gadget keygen: r={parity_cols.shape[0]} rank={rank} g={g}")
    free_cols = np.setdiff1d(np.arange(n, dtype=np.int64), pivot_cols)
    gen_bits = np.zeros((n, g), dtype=np.uint8)
    gen_bits[free_cols, np.arange(g)] = 1
    reduced_cols = (packed[:rank][:, (free_cols >> 3)] >> (7 - (free_cols & 7)).astype(np.uint8)) & 1
    gen_bits[pivot_cols] = reduced_cols
    gen_cols = gf2.pack_rows(np.ascontiguousarray(gen_bits.T))
    otp = rng.integers(0, 2, size=n, dtype=np.uint8)
    prm = PrcParams(n=n, k_msg=params.k_msg, k_pad=params.k_pad, r=parity_cols.shape[0],
                    t=t, fpr=params.fpr)
    return PrcKey(params=prm, parity_cols=parity_cols, gen_cols=gen_cols,
                  pivot_rows=free_cols, otp=otp, key_id="gadget", rng_seed=seed)


t0 = time.time()
gkey = keygen_gadget(params, 7)
print(f"gadget keygen time {time.time()-t0:.1f}s")
print("== gadget construction, clamp 0.42, iters 400 ==")
sweep(gkey, "gadget", 0.42, 400, 0.0, (0.28, 0.30, 0.32, 0.34))
