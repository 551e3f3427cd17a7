"""Population-dynamics density evolution: check degree 3, BSC(p), sum-product.

Variable node-degree profiles constrained to mean r*t/n = 2.8945.
"""
import numpy as np

rng = np.random.default_rng(0)
POP = 400_000
AVG = (16384 - 576) * 3 / 16384  # 2.8945


def de_error(p, node_degrees, node_fracs, iters=200, pop=POP, L0=None):
    """Residual bit error estimate after BP under the given profile."""
    node_degrees = np.asarray(node_degrees, float)
    node_fracs = np.asarray(node_fracs, float)
    assert abs(node_degrees @ node_fracs - AVG) < 1e-6, node_degrees @ node_fracs
    # edge-perspective degree distribution
    edge_w = node_degrees * node_fracs
    edge_w = edge_w / edge_w.sum()
    if L0 is None:
        L0 = np.log((1 - p) / p)
    # all-zero codeword, BSC: prior = +L0 w.p. 1-p else -L0
    prior = np.where(rng.random(pop) < p, -L0, L0)
    msg = prior.copy()  # var->check messages population
    for it in range(iters):
        # check update: combine two incoming var messages
        a = msg[rng.integers(0, pop, pop)]
        b = msg[rng.integers(0, pop, pop)]
        chk = 2.0 * np.arctanh(np.clip(np.tanh(a / 2) * np.tanh(b / 2), -1 + 1e-15, 1 - 1e-15))
        # var update: prior + (deg-1) incoming check messages, deg ~ edge perspective
        deg = rng.choice(node_degrees, size=pop, p=edge_w).astype(int)
        total = prior.copy()
        maxd = int(node_degrees.max())
        for k in range(1, maxd):
            add = chk[rng.integers(0, pop, pop)]
            total = total + np.where(deg - 1 >= k, add, 0.0)
        msg = total
    # node-perspective posterior error
    degn = rng.choice(node_degrees, size=pop, p=node_fracs / node_fracs.sum()).astype(int)
    post = prior.copy()
    maxd = int(node_degrees.max())
    for k in range(1, maxd + 1):
        add = chk[rng.integers(0, pop, pop)]
        post = post + np.where(degn >= k, add, 0.0)
    return float(np.mean(post < 0) + 0.5 * np.mean(post == 0))


def frac_for(degrees, target=AVG):
    """Two-degree profile fractions hitting the target mean."""
    d1, d2 = degrees
    x = (d2 - target) / (d2 - d1)
    return [x, 1 - x]


profiles = {
    "{2,3}": ([2, 3], frac_for((2, 3))),
    "{1,3}": ([1, 3], frac_for((1, 3))),
    "{2,4}": ([2, 4], frac_for((2, 4))),
    "{2,5}": ([2, 5], frac_for((2, 5))),
    "{2,6}": ([2, 6], frac_for((2, 6))),
    "{2,8}": ([2, 8], frac_for((2, 8))),
    "{2,3,8}": ([2, 3, 8], [0.355, 0.595, 0.05]),
    "{2,3,12}": ([2, 3, 12], [0.4655, 0.4945, 0.04]),  # a = 9c + 0.1055, c = 0.04
}

for name, (degs, fracs) in profiles.items():
    fr = np.array(fracs, float)
    fr = fr / fr.sum()
    # renormalize exactly to the mean by adjusting the first fraction pair is
    # messy; instead require closeness and skip bad ones
    mean = np.array(degs) @ fr
    if abs(mean - AVG) > 0.02:
        scale = None
        print(f"{name}: mean {mean:.3f} off target, skipped")
        continue
    line = [f"{name:10s}"]
    for p in (0.28, 0.30, 0.32, 0.34):
        err = de_error(p, degs, fr, iters=150, pop=200_000)
        line.append(f"p={p}: {err:.4f}")
    print("  ".join(line))
