"""Independent brute-force oracles used across the test suite.

Everything here enumerates joint states directly and works in linear or
plain max-shifted arithmetic, deliberately avoiding the library's
softplus/free-energy shortcuts and blocked reductions.
"""

import math

import numpy as np

from deepblm.numerics import RngState


def all_states(n):
    """All binary vectors of length n, little-endian to match the library order."""
    return [np.array([(s >> j) & 1 for j in range(n)], dtype=float) for s in range(2**n)]


def rbm_joint_log_z(r):
    """log Z by summing exp(energy) over every (v, h) joint state."""
    terms = []
    for v in all_states(r.nv):
        for h in all_states(r.nh):
            terms.append(v @ r.b_vis + h @ r.b_hid + h @ r.W @ v)
    m = max(terms)
    return m + math.log(sum(math.exp(t - m) for t in terms))


def rbm_brute_ll(r, x):
    """log P(x) for one (possibly soft) input via joint enumeration."""
    terms = [x @ r.b_vis + h @ r.b_hid + h @ r.W @ x for h in all_states(r.nh)]
    m = max(terms)
    return m + math.log(sum(math.exp(t - m) for t in terms)) - rbm_joint_log_z(r)


def bern_pmf(x, p):
    """prod_i Bern(x_i; p_i) in linear space, soft x allowed."""
    p = np.clip(p, 1e-300, 1.0)
    q = np.clip(1.0 - p, 1e-300, 1.0)
    return float(np.prod(p**x * q ** (1.0 - x)))


def decoder_probs(gen, h):
    return 1.0 / (1.0 + np.exp(-(gen.W @ h + gen.b)))


def rbm_brute_marginal(top):
    """P_top(v) over all visible states of the top RBM, by joint enumeration."""
    weights = []
    for v in all_states(top.nv):
        w = sum(
            math.exp(v @ top.b_vis + h @ top.b_hid + h @ top.W @ v) for h in all_states(top.nh)
        )
        weights.append(w)
    total = sum(weights)
    return [w / total for w in weights], total


def brute_deep_ll(gen, top, X):
    """Mean log sum_{h1,h2} P(x|h1) e^{E_top(h1,h2)} / Z_top, all in linear space."""
    p_top, _ = rbm_brute_marginal(top)
    lls = []
    for x in X:
        px = sum(
            bern_pmf(x, decoder_probs(gen, h)) * p_top[i]
            for i, h in enumerate(all_states(gen.nh))
        )
        lls.append(math.log(px))
    return float(np.mean(lls))


def naive_mixture_ll(gen, mu, X):
    """Mean log of the N^2 * 2^nh double sum, linear space throughout."""
    n = mu.shape[0]
    states = all_states(gen.nh)
    lls = []
    for x in X:
        total = 0.0
        for h in states:
            px_h = bern_pmf(x, decoder_probs(gen, h))
            qh = sum(bern_pmf(h, mu[m]) for m in range(n)) / n
            total += px_h * qh
        lls.append(math.log(total))
    return float(np.mean(lls))


def central_diff(f, x0, step=1e-5):
    """Central finite-difference gradient of a scalar function of a flat vector."""
    x0 = np.asarray(x0, dtype=float)
    g = np.zeros_like(x0)
    for i in range(x0.size):
        xp, xm = x0.copy(), x0.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (f(xp) - f(xm)) / (2 * step)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    denom = max(np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def random_soft_data(n, dim, seed, binary=False):
    g = RngState(seed).generator()
    X = g.random((n, dim))
    if binary:
        X = (X < 0.5).astype(float)
    return X
