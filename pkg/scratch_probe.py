"""Calibration probe: keygen timing, BP waterfall vs llr_clamp. Not shipped."""
import time

import numpy as np

from prcmark._rng import spawn
from prcmark.prc import PrcParams, keygen, encode, decode

t0 = time.time()
params = PrcParams(n=16384, k_msg=512, k_pad=64, t=3, fpr=1e-6)
key = keygen(params, seed=7)
t1 = time.time()
print(f"keygen n=16384 r={params.r}: {t1 - t0:.2f}s  g={key.g} "
      f"accept_count={key.accept_count} ({key.accept_count / params.r:.4f})")

rng = spawn(123, 1)
msg = rng.integers(0, 2, size=512, dtype=np.uint8)
cw = encode(key, msg, rng)

t0 = time.time()
out = decode(key, cw.astype(np.float64))
print(f"noiseless decode: {time.time() - t0:.3f}s iters={out.bp_iterations} "
      f"ok={out.message is not None and np.array_equal(out.message, msg)}")


def success_rate(key, flip, trials, clamp, iters=100):
    p = key.params
    key.params.llr_clamp = clamp
    key.params.max_bp_iters = iters
    good = 0
    times = []
    for i in range(trials):
        r = spawn(999, i, int(flip * 10000))
        m = r.integers(0, 2, size=p.k_msg, dtype=np.uint8)
        c = encode(key, m, r).astype(np.float64)
        mask = r.random(p.n) < flip
        c[mask] *= -1
        t = time.time()
        o = decode(key, c)
        times.append(time.time() - t)
        if o.message is not None and np.array_equal(o.message, m):
            good += 1
    return good / trials, float(np.mean(times))


for clamp in (0.999999, 0.9, 0.75, 0.55, 0.42):
    line = [f"clamp={clamp}:"]
    for flip in (0.24, 0.28, 0.30, 0.32, 0.34):
        rate, dt = success_rate(key, flip, 10, clamp)
        line.append(f"f{flip}:{rate:.1f}({dt:.2f}s)")
    print(" ".join(line))
