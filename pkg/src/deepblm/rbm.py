"""Restricted Boltzmann machine over binary units.

Energy E(v, h) = -b.v - c.h - h.W.v with W of shape (hidden, visible).
Small models are evaluated exactly by enumerating the smaller unit side;
larger ones fall back to annealed importance sampling for log Z.  Soft
visible values are plugged into the energy directly (soft-evaluation
convention), which keeps data with fractional pixels first-class.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import SoftDataset
from .numerics import (
    ENUM_LIMIT,
    STATE_BLOCK,
    RngState,
    binary_state_blocks,
    log_sum_exp,
    sigmoid,
    softplus,
)


@dataclass
class Rbm:
    W: np.ndarray  # (nh, nv)
    b_vis: np.ndarray  # (nv,)
    b_hid: np.ndarray  # (nh,)

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.b_vis = np.ascontiguousarray(self.b_vis, dtype=np.float64)
        self.b_hid = np.ascontiguousarray(self.b_hid, dtype=np.float64)
        if self.W.shape != (self.b_hid.size, self.b_vis.size):
            raise ValueError(
                f"inconsistent dims: W {self.W.shape}, b_vis {self.b_vis.size}, "
                f"b_hid {self.b_hid.size}"
            )
        for name, arr in (("W", self.W), ("b_vis", self.b_vis), ("b_hid", self.b_hid)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite parameter in {name}")

    @property
    def nv(self) -> int:
        return self.b_vis.size

    @property
    def nh(self) -> int:
        return self.b_hid.size

    def to_json(self) -> dict:
        return {
            "type": "rbm",
            "nv": self.nv,
            "nh": self.nh,
            "W": self.W.ravel().tolist(),
            "b_vis": self.b_vis.tolist(),
            "b_hid": self.b_hid.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Rbm":
        if obj.get("type") != "rbm":
            raise ValueError(f"not an RBM payload: type={obj.get('type')!r}")
        nv, nh = int(obj["nv"]), int(obj["nh"])
        return cls(
            np.asarray(obj["W"], dtype=np.float64).reshape(nh, nv),
            np.asarray(obj["b_vis"], dtype=np.float64),
            np.asarray(obj["b_hid"], dtype=np.float64),
        )


def init_rbm(nv: int, nh: int, rng: RngState, sigma: float = 0.01) -> Rbm:
    """Gaussian weights, zero biases."""
    g = rng.generator()
    return Rbm(g.normal(0.0, sigma, size=(nh, nv)), np.zeros(nv), np.zeros(nh))


def cond_hidden(r: Rbm, v: np.ndarray) -> np.ndarray:
    """P(h_j = 1 | v) = sigmoid(W v + b_hid), batched over leading axes."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != r.nv:
        raise ValueError(f"dim mismatch: v has {v.shape[-1]} entries, expected {r.nv}")
    return sigmoid(v @ r.W.T + r.b_hid)


def cond_visible(r: Rbm, h: np.ndarray) -> np.ndarray:
    """P(v_i = 1 | h) = sigmoid(W^T h + b_vis)."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != r.nh:
        raise ValueError(f"dim mismatch: h has {h.shape[-1]} entries, expected {r.nh}")
    return sigmoid(h @ r.W + r.b_vis)


def free_energy(r: Rbm, v: np.ndarray) -> np.ndarray:
    """F(v) = -b_vis.v - sum_j softplus(b_hid_j + (W v)_j); log P(v) = -F(v) - log Z."""
    v = np.asarray(v, dtype=np.float64)
    return -(v @ r.b_vis) - softplus(v @ r.W.T + r.b_hid).sum(axis=-1)


def log_partition_exact(r: Rbm, limit: int = ENUM_LIMIT, block: int = STATE_BLOCK) -> float:
    """Exact log Z by summing over all states of the smaller unit side."""
    if min(r.nv, r.nh) > limit:
        raise ValueError(
            f"enumeration too large: min({r.nv}, {r.nh}) units exceeds limit {limit}"
        )
    if r.nh <= r.nv:
        n, bias, other_bias, w = r.nh, r.b_hid, r.b_vis, r.W  # states s over h, W^T s
    else:
        n, bias, other_bias, w = r.nv, r.b_vis, r.b_hid, r.W.T
    acc = -np.inf
    for states in binary_state_blocks(n, block=block, limit=limit):
        terms = states @ bias + softplus(states @ w + other_bias).sum(axis=1)
        acc = np.logaddexp(acc, log_sum_exp(terms))
    return float(acc)


def exact_ll(r: Rbm, ds: SoftDataset, limit: int = ENUM_LIMIT, block: int = STATE_BLOCK) -> float:
    """Mean log-likelihood (nats/sample) with the exact partition function."""
    log_z = log_partition_exact(r, limit=limit, block=block)
    return float(np.mean(-free_energy(r, ds.X)) - log_z)


def exact_model_moments(r: Rbm, limit: int = ENUM_LIMIT, block: int = STATE_BLOCK):
    """Exact model expectations (E[h v^T], E[v], E[h]) by enumerating visible states."""
    if r.nv > limit:
        raise ValueError(f"enumeration too large: {r.nv} visible units exceeds limit {limit}")
    log_z = log_partition_exact(r, limit=limit, block=block)
    e_w = np.zeros_like(r.W)
    e_v = np.zeros(r.nv)
    e_h = np.zeros(r.nh)
    for states in binary_state_blocks(r.nv, block=block, limit=limit):
        p = np.exp(-free_energy(r, states) - log_z)
        ph = cond_hidden(r, states)
        e_w += (ph * p[:, None]).T @ states
        e_v += p @ states
        e_h += p @ ph
    return e_w, e_v, e_h


def exact_ll_gradient(r: Rbm, ds: SoftDataset, limit: int = ENUM_LIMIT):
    """Exact gradient of the mean log-likelihood: data stats minus model stats.

    Uses the same conditional statistics as the CD update, so agreement with
    finite differences validates that shared code.
    """
    ph = cond_hidden(r, ds.X)
    n = len(ds)
    data_w = ph.T @ ds.X / n
    data_v = ds.X.mean(axis=0)
    data_h = ph.mean(axis=0)
    e_w, e_v, e_h = exact_model_moments(r, limit=limit)
    return data_w - e_w, data_v - e_v, data_h - e_h


def cd_k_train(
    r: Rbm,
    train: SoftDataset,
    k: int = 1,
    lr: float = 0.01,
    epochs: int = 1,
    rng: RngState = RngState(0),
    batch_size: int | None = None,
) -> Rbm:
    """Contrastive divergence with k alternating Gibbs steps.

    Positive phase uses the soft data; the negative chain samples hidden
    units binary and reconstructs visibles as probabilities.  Plain SGD,
    no momentum or weight decay.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if lr < 0:
        raise ValueError(f"negative learning rate: {lr}")
    X = train.X
    n = X.shape[0]
    if batch_size is None:
        batch_size = min(n, 100)
    W = r.W.copy()
    b = r.b_vis.copy()
    c = r.b_hid.copy()
    g = rng.generator()
    for _ in range(epochs):
        perm = g.permutation(n)
        for start in range(0, n, batch_size):
            v0 = X[perm[start : start + batch_size]]
            m = v0.shape[0]
            ph0 = sigmoid(v0 @ W.T + c)
            vk, phk = v0, ph0
            for _ in range(k):
                hk = (g.random(phk.shape) < phk).astype(np.float64)
                vk = sigmoid(hk @ W + b)
                phk = sigmoid(vk @ W.T + c)
            W += (lr / m) * (ph0.T @ v0 - phk.T @ vk)
            b += (lr / m) * (v0.sum(axis=0) - vk.sum(axis=0))
            c += (lr / m) * (ph0.sum(axis=0) - phk.sum(axis=0))
    return Rbm(W, b, c)


def gibbs_sample(r: Rbm, n_steps: int, n_samples: int, rng: RngState) -> np.ndarray:
    """Visible samples after ``n_steps`` of block Gibbs from uniform random starts."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    g = rng.generator()
    v = (g.random((n_samples, r.nv)) < 0.5).astype(np.float64)
    for _ in range(n_steps):
        ph = sigmoid(v @ r.W.T + r.b_hid)
        h = (g.random(ph.shape) < ph).astype(np.float64)
        pv = sigmoid(h @ r.W + r.b_vis)
        v = (g.random(pv.shape) < pv).astype(np.float64)
    return v


@dataclass(frozen=True)
class AisEstimate:
    log_z: float
    std_err: float
    n_chains: int
    n_temps: int


def base_rate_visible_bias(ds: SoftDataset, eps: float = 0.01) -> np.ndarray:
    """Visible biases of the zero-weight model matched to the data marginals."""
    p = np.clip(ds.X.mean(axis=0), eps, 1.0 - eps)
    return np.log(p / (1.0 - p))


def ais_log_partition(
    r: Rbm,
    n_temps: int,
    n_chains: int,
    rng: RngState,
    base_b_vis: np.ndarray | None = None,
    n_boot: int = 100,
) -> AisEstimate:
    """Annealed importance sampling estimate of log Z.

    Anneals along the geometric path from the zero-weight model with visible
    bias ``base_b_vis`` (zeros unless supplied, e.g. from
    :func:`base_rate_visible_bias`) to ``r``, one Gibbs sweep per
    temperature.  The standard error is a bootstrap over chains.
    """
    if n_temps < 2:
        raise ValueError(f"n_temps must be >= 2, got {n_temps}")
    if n_chains < 1:
        raise ValueError(f"n_chains must be >= 1, got {n_chains}")
    b_a = np.zeros(r.nv) if base_b_vis is None else np.asarray(base_b_vis, dtype=np.float64)
    if b_a.size != r.nv:
        raise ValueError(f"base bias has {b_a.size} entries, expected {r.nv}")
    log_z_base = float(softplus(b_a).sum() + r.nh * math.log(2.0))

    def log_f(v, beta):
        vis = v @ ((1.0 - beta) * b_a + beta * r.b_vis)
        hid = softplus(beta * (v @ r.W.T + r.b_hid)).sum(axis=1)
        return vis + hid

    g = rng.generator()
    betas = np.linspace(0.0, 1.0, n_temps)
    v = (g.random((n_chains, r.nv)) < sigmoid(b_a)).astype(np.float64)
    log_w = np.zeros(n_chains)
    for i in range(1, n_temps):
        beta = betas[i]
        log_w += log_f(v, beta) - log_f(v, betas[i - 1])
        if i < n_temps - 1:
            ph = sigmoid(beta * (v @ r.W.T + r.b_hid))
            h = (g.random(ph.shape) < ph).astype(np.float64)
            pv = sigmoid((1.0 - beta) * b_a + beta * (h @ r.W + r.b_vis))
            v = (g.random(pv.shape) < pv).astype(np.float64)
    log_z = log_z_base + log_sum_exp(log_w) - math.log(n_chains)
    if n_chains > 1:
        idx = g.integers(0, n_chains, size=(n_boot, n_chains))
        boot = log_sum_exp(log_w[idx], axis=1) - math.log(n_chains)
        std_err = float(boot.std(ddof=1))
    else:
        std_err = 0.0
    return AisEstimate(float(log_z), std_err, n_chains, n_temps)


def save_rbm(r: Rbm, path) -> None:
    Path(path).write_text(json.dumps(r.to_json()) + "\n")


def load_rbm(path) -> Rbm:
    return Rbm.from_json(json.loads(Path(path).read_text()))
