"""Probe 4: accumulator-chain degree-2 placement + OSD-0 rescue."""
import time

import numpy as np

from prcmark._rng import spawn
from prcmark import gf2
from prcmark.prc import PrcParams, PrcKey, encode, _pack_parity


def sample_chain(n, r, t, rng):
    """t=3 rows; degree-2 vars form a path through checks, hubs fill the rest."""
    total = r * t
    leftover = (total - 2 * n) % 4
    n6 = (total - 2 * n - leftover) // 4
    n3 = leftover
    n2 = n - n6 - n3
    cols = rng.permutation(n)
    deg2, deg6, deg3 = cols[:n2], cols[n2:n2 + n6], cols[n2 + n6:]
    rows = np.full((r, t), -1, dtype=np.int64)
    slots = np.full(r, t, dtype=np.int64)
    # chain: deg-2 var i joins checks perm[i] and perm[i+1]
    perm = rng.permutation(r)
    m = min(n2, r - 1)
    chain_vars = deg2[:m]
    for i in range(m):
        a, b = perm[i], perm[i + 1]
        rows[a, t - slots[a]] = chain_vars[i]
        slots[a] -= 1
        rows[b, t - slots[b]] = chain_vars[i]
        slots[b] -= 1
    # leftover deg-2 vars (if n2 > r-1) become random deg-2
    extra2 = deg2[m:]
    stubs = []
    for v, d in [(extra2, 2), (deg6, 6), (deg3, 3)]:
        stubs.append(np.repeat(v, d))
    pool = np.concatenate(stubs) if stubs else np.empty(0, dtype=np.int64)
    rng.shuffle(pool)
    # fill remaining slots
    free_slots = np.repeat(np.arange(r), slots)
    assert free_slots.shape[0] == pool.shape[0], (free_slots.shape, pool.shape)
    order = rng.permutation(free_slots.shape[0])
    for k in range(free_slots.shape[0]):
        ch = free_slots[order[k]]
        rows[ch, t - slots[ch]] = pool[k]
        slots[ch] -= 1
    # repair duplicate columns within a row
    for _ in range(500):
        srt = np.sort(rows, axis=1)
        bad = np.nonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))[0]
        if bad.size == 0:
            break
        for i in bad:
            j = int(rng.integers(r))
            a_, b_ = int(rng.integers(t)), int(rng.integers(t))
            rows[i, a_], rows[j, b_] = rows[j, b_], rows[i, a_]
    return rows.astype(np.int32)


def build_key(params, seed, sampler):
    n, r, t = params.n, params.r, params.t
    rng = spawn(seed, 0x6B65)
    parity_cols = sampler(n, r, t, rng)
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
    return PrcKey(params=params, parity_cols=parity_cols, gen_cols=gen_cols,
                  pivot_rows=free_cols, otp=otp, key_id="x", rng_seed=seed), g


def osd0(key, post, received_bits):
    g = key.g
    width = gf2.packed_width(g)
    order = np.argsort(-np.abs(post)).astype(np.int64)
    # augmented packed rows of G: g bits + 1 aug bit
    red = np.zeros((g, width + 1), dtype=np.uint8)
    have = np.zeros(g, dtype=bool)
    found = 0
    rows_bits = None
    for idx in order:
        row = (key.gen_cols[:, idx >> 3] >> (7 - (idx & 7))) & 1  # G row idx: (g,)
        v = np.zeros(width + 1, dtype=np.uint8)
        v[:width] = np.packbits(row, axis=0)[:width]
        v[width] = received_bits[idx]
        # reduce against basis
        nz = np.nonzero(np.unpackbits(v[:width], count=g))[0]
        k = 0
        while k < nz.shape[0]:
            b = nz[k]
            if have[b]:
                v ^= red[b]
                nz = np.nonzero(np.unpackbits(v[:width], count=g))[0]
                k = 0
                continue
            k += 1
        bits = np.unpackbits(v[:width], count=g)
        lead = np.nonzero(bits)[0]
        if lead.shape[0] == 0:
            continue
        p = lead[0]
        # eliminate p from existing rows
        mask = ((red[:, p >> 3] >> (7 - (p & 7))) & 1).astype(bool) & have
        red[mask] ^= v
        red[p] = v
        have[p] = True
        found += 1
        if found == g:
            break
    u = np.array([red[b, width] for b in range(g)], dtype=np.uint8)
    return u


params = PrcParams(n=16384, k_msg=512, k_pad=64, t=3, fpr=1e-6)
t0 = time.time()
key, g = build_key(params, seed=11, sampler=sample_chain)
print(f"chain keygen {time.time()-t0:.1f}s g={g}")

alpha_need = int(np.ceil(params.n / 2 + np.sqrt(params.n * (g * np.log(2) + np.log(1 / params.fpr)) / 2)))
print(f"OSD agreement threshold {alpha_need}/{params.n} = {alpha_need/params.n:.4f}")


def run(key, flip, clamp, max_iters, i):
    p = key.params
    rng = spawn(555, i, int(flip * 10000))
    m = rng.integers(0, 2, size=p.k_msg, dtype=np.uint8)
    c = encode(key, m, rng).astype(np.float64)
    c[rng.random(p.n) < flip] *= -1
    s = c * key.otp_signs
    received = (s < 0).astype(np.uint8)
    llr = 2.0 * np.arctanh(np.clip(s, -clamp, clamp))
    parity_cols, flat = key.parity_cols, key._flat_cols
    n, (r, t) = p.n, parity_cols.shape
    m_cv = np.zeros((r, t))
    post = llr
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
    bp_ok = sat == r and np.array_equal(hard[key.pivot_rows][:p.k_msg], m)
    osd_ok = False
    if sat < r:
        u = osd0(key, post, received)
        x = gf2.unpack_rows(gf2.xor_select(key.gen_cols, u), n)
        agree = int((x == received).sum())
        osd_ok = agree >= alpha_need and np.array_equal(u[:p.k_msg], m)
    return bp_ok, osd_ok, it


for clamp in (0.38, 0.42):
    for flip in (0.30, 0.31, 0.32, 0.33):
        t0 = time.time()
        rows = [run(key, flip, clamp, 300, i) for i in range(20)]
        bp_r = np.mean([a for a, _, _ in rows])
        tot = np.mean([a or b for a, b, _ in rows])
        iters = np.mean([c for _, _, c in rows])
        print(f"clamp={clamp} flip={flip}: bp={bp_r:.2f} bp+osd={tot:.2f} iters={iters:.0f} "
              f"({time.time()-t0:.0f}s)")
