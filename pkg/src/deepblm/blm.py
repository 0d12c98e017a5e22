"""Best-latent-marginal machinery.

Given a decoder P(x|h) over binary h, the best latent marginal is the
distribution Q(h) maximizing the data log-likelihood of the mixture
sum_h P(x|h) Q(h); the likelihood it achieves upper-bounds every two-layer
model built on that decoder.  This module provides the empirical bound for
a trained encoder (exact by tabulation or sampled), the data-incorporation
map whose fixed point is the optimum (one EM step per application), the KL
bound on the loss when a top model misses the optimum, and the one-step
Gibbs consistency likelihood for RBMs.

Latent state spaces are enumerated in fixed-order blocks; all mass is kept
in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datasets import SoftDataset
from .numerics import (
    ENUM_LIMIT,
    STATE_BLOCK,
    XENT_EPS,
    RngState,
    binary_state_blocks,
    binary_states,
    log_sum_exp,
    sigmoid,
    softplus,
)
from .rbm import Rbm, log_partition_exact

# Cap on a materialized (samples x latent-states) log-probability table.
MAX_TABLE_BYTES = 1 << 30


@dataclass
class GenerativeLayer:
    """Decoder: P(x|h) = prod_i Bern(x_i; sigmoid((W h + b)_i))."""

    W: np.ndarray  # (nv, nh)
    b: np.ndarray  # (nv,)

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.W.shape[0] != self.b.size:
            raise ValueError(f"inconsistent dims: W {self.W.shape}, b {self.b.size}")

    @property
    def nv(self) -> int:
        return self.W.shape[0]

    @property
    def nh(self) -> int:
        return self.W.shape[1]

    def logits(self, h: np.ndarray) -> np.ndarray:
        return np.asarray(h, dtype=np.float64) @ self.W.T + self.b

    def probs(self, h: np.ndarray) -> np.ndarray:
        return np.clip(sigmoid(self.logits(h)), XENT_EPS, 1.0 - XENT_EPS)

    def to_json(self) -> dict:
        return {
            "type": "generative_layer",
            "nv": self.nv,
            "nh": self.nh,
            "W": self.W.ravel().tolist(),
            "b": self.b.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GenerativeLayer":
        if obj.get("type") != "generative_layer":
            raise ValueError(f"not a generative layer payload: type={obj.get('type')!r}")
        nv, nh = int(obj["nv"]), int(obj["nh"])
        return cls(np.asarray(obj["W"]).reshape(nv, nh), np.asarray(obj["b"]))


@dataclass
class InferenceModel:
    """Encoder: q(h|x) = prod_j Bern(h_j; .), a chain of affine-sigmoid layers.

    Only ever an optimization prop; never counted among generative parameters.
    """

    layers: list  # [(W, b)] applied in order, W of shape (out, in)

    def __post_init__(self):
        self.layers = [
            (np.ascontiguousarray(W, dtype=np.float64), np.ascontiguousarray(b, dtype=np.float64))
            for W, b in self.layers
        ]
        if not self.layers:
            raise ValueError("inference model needs at least one layer")
        for i in range(1, len(self.layers)):
            if self.layers[i][0].shape[1] != self.layers[i - 1][0].shape[0]:
                raise ValueError(f"layer {i} input dim mismatch")

    @property
    def nh(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def nv(self) -> int:
        return self.layers[0][0].shape[1]

    def encode(self, x: np.ndarray) -> np.ndarray:
        a = np.asarray(x, dtype=np.float64)
        if a.shape[-1] != self.nv:
            raise ValueError(f"dim mismatch: x has {a.shape[-1]} entries, expected {self.nv}")
        for W, b in self.layers:
            a = sigmoid(a @ W.T + b)
        return a

    def to_json(self) -> dict:
        return {
            "type": "inference_model",
            "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.layers],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "InferenceModel":
        if obj.get("type") != "inference_model":
            raise ValueError(f"not an inference model payload: type={obj.get('type')!r}")
        return cls([(np.asarray(l["W"]), np.asarray(l["b"])) for l in obj["layers"]])


@dataclass
class MixturePosterior:
    """q_D(h) = sum_n w_n Bern(h; mu_n): one factorized component per data point.

    Weights default to uniform 1/N (the empirical-data case); explicit log
    weights let any tabular distribution be written as a mixture of clamped
    point masses.
    """

    mu: np.ndarray  # (N, nh), entries in (0, 1)
    log_w: np.ndarray | None = None  # (N,), normalized; None means uniform

    def __post_init__(self):
        self.mu = np.clip(np.asarray(self.mu, dtype=np.float64), XENT_EPS, 1.0 - XENT_EPS)
        if self.mu.ndim != 2 or self.mu.shape[0] < 1:
            raise ValueError(f"need a (N >= 1, nh) component array, got shape {self.mu.shape}")
        if self.log_w is not None:
            self.log_w = np.asarray(self.log_w, dtype=np.float64)
            if self.log_w.shape != (self.mu.shape[0],):
                raise ValueError(f"need one weight per component, got {self.log_w.shape}")
            self.log_w = self.log_w - log_sum_exp(self.log_w)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def nh(self) -> int:
        return self.mu.shape[1]

    def log_weights(self) -> np.ndarray:
        if self.log_w is None:
            return np.full(self.n, -math.log(self.n))
        return self.log_w


@dataclass
class TabularDistribution:
    """Explicit distribution over all 2^nh binary states, little-endian state order."""

    nh: int
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        if self.probs.shape != (2**self.nh,):
            raise ValueError(f"need 2^{self.nh} probabilities, got {self.probs.shape}")
        if np.any(self.probs < 0.0) or abs(self.probs.sum() - 1.0) > 1e-10:
            raise ValueError("not a normalized distribution")

    def log_probs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.probs)

    @classmethod
    def uniform(cls, nh: int) -> "TabularDistribution":
        return cls(nh, np.full(2**nh, 2.0**-nh))

    @classmethod
    def from_log(cls, nh: int, log_probs: np.ndarray) -> "TabularDistribution":
        p = np.exp(log_probs - log_sum_exp(log_probs))
        return cls(nh, p / p.sum())

    def to_json(self) -> list:
        return self.probs.tolist()

    @classmethod
    def from_json(cls, probs: list) -> "TabularDistribution":
        arr = np.asarray(probs, dtype=np.float64)
        nh = int(round(math.log2(arr.size)))
        if 2**nh != arr.size:
            raise ValueError(f"length {arr.size} is not a power of two")
        return cls(nh, arr)


def generative_from_rbm(r: Rbm) -> GenerativeLayer:
    """P(x|h) of an RBM: transposed weights plus visible bias (hidden bias unused)."""
    return GenerativeLayer(r.W.T.copy(), r.b_vis.copy())


def inference_from_rbm(r: Rbm) -> InferenceModel:
    """Q(h|x) of an RBM as a one-layer encoder."""
    return InferenceModel([(r.W.copy(), r.b_hid.copy())])


def mixture_from(q: InferenceModel, data: SoftDataset) -> MixturePosterior:
    """Push the dataset through the encoder: one Bernoulli component per sample."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    return MixturePosterior(q.encode(data.X))


def mixture_from_tabular(tab: TabularDistribution, limit: int = ENUM_LIMIT) -> MixturePosterior:
    """Any latent distribution rewritten as a mixture of (clamped) point masses."""
    return MixturePosterior(binary_states(tab.nh, limit=limit), tab.log_probs())


def tabulate_mixture(
    mix: MixturePosterior, limit: int = ENUM_LIMIT, block: int = STATE_BLOCK
) -> np.ndarray:
    """log q_D(h) for every state h, as a dense 2^nh vector."""
    log_mu = np.log(mix.mu)
    log_nmu = np.log1p(-mix.mu)
    delta = (log_mu - log_nmu).T  # (nh, N)
    base = log_nmu.sum(axis=1) + mix.log_weights()  # (N,)
    out = np.empty(2**mix.nh)
    pos = 0
    for states in binary_state_blocks(mix.nh, block=block, limit=limit):
        vals = states @ delta + base  # (B, N)
        out[pos : pos + states.shape[0]] = log_sum_exp(vals, axis=1)
        pos += states.shape[0]
    return out


def log_mixture_ll_per_x(
    gen: GenerativeLayer,
    X: np.ndarray,
    log_tab: np.ndarray,
    limit: int = ENUM_LIMIT,
    block: int = STATE_BLOCK,
) -> np.ndarray:
    """log sum_h P(x|h) q(h) per sample, q given as a dense log table over states."""
    if log_tab.shape != (2**gen.nh,):
        raise ValueError(f"log table has {log_tab.shape} entries, expected 2^{gen.nh}")
    acc = np.full(X.shape[0], -np.inf)
    pos = 0
    for states in binary_state_blocks(gen.nh, block=block, limit=limit):
        logits = gen.logits(states)  # (B, nv)
        log_px = X @ logits.T - softplus(logits).sum(axis=1)  # (N, B)
        chunk = log_px + log_tab[pos : pos + states.shape[0]]
        acc = np.logaddexp(acc, log_sum_exp(chunk, axis=1))
        pos += states.shape[0]
    return acc


def blm_bound_exact(
    gen: GenerativeLayer,
    q_d: MixturePosterior,
    eval_data: SoftDataset,
    limit: int = ENUM_LIMIT,
    block: int = STATE_BLOCK,
) -> float:
    """Empirical latent-marginal bound: mean_x log sum_h P(x|h) q_D(h).

    Feeding the training set for both the mixture and the evaluation gives
    the training bound; feeding held-out data for both gives the validation
    variant.
    """
    if gen.nh != q_d.nh:
        raise ValueError(f"dim mismatch: decoder nh {gen.nh}, mixture nh {q_d.nh}")
    log_tab = tabulate_mixture(q_d, limit=limit, block=block)
    return float(np.mean(log_mixture_ll_per_x(gen, eval_data.X, log_tab, limit, block)))


def blm_bound_sampled(
    gen: GenerativeLayer,
    q: InferenceModel,
    data: SoftDataset,
    k: int,
    rng: RngState,
    row_block: int = 512,
) -> float:
    """Monte-Carlo bound in O(K N^2): K binary h-draws per mixture component."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    mu = mixture_from(q, data).mu
    g = rng.generator()
    draws = (g.random((k, mu.shape[0], mu.shape[1])) < mu).astype(np.float64)
    h = draws.reshape(k * mu.shape[0], mu.shape[1])
    logits = gen.logits(h)  # (NK, nv)
    sp = softplus(logits).sum(axis=1)
    total = 0.0
    X = data.X
    for start in range(0, X.shape[0], row_block):
        log_px = X[start : start + row_block] @ logits.T - sp
        total += float(np.sum(log_sum_exp(log_px, axis=1) - math.log(h.shape[0])))
    return total / X.shape[0]


def _log_px_table(
    gen: GenerativeLayer,
    X: np.ndarray,
    limit: int = ENUM_LIMIT,
    block: int = STATE_BLOCK,
    max_bytes: int = MAX_TABLE_BYTES,
) -> np.ndarray:
    """Materialize log P(x_n | h_s) as an (N, 2^nh) table, memory-guarded."""
    n_states = 2**gen.nh
    need = X.shape[0] * n_states * 8
    if gen.nh > limit or need > max_bytes:
        raise ValueError(
            f"enumeration too large: {X.shape[0]} x 2^{gen.nh} table needs {need} bytes"
        )
    out = np.empty((X.shape[0], n_states))
    pos = 0
    for states in binary_state_blocks(gen.nh, block=block, limit=limit):
        logits = gen.logits(states)
        out[:, pos : pos + states.shape[0]] = X @ logits.T - softplus(logits).sum(axis=1)
        pos += states.shape[0]
    return out


def _em_step(log_px: np.ndarray, log_q: np.ndarray):
    """One data-incorporation update in log space.

    Returns the mean log-likelihood of the *current* q and the updated
    log-table (1/N) sum_n Q(h | x_n).
    """
    joint = log_px + log_q
    per_x = log_sum_exp(joint, axis=1)
    log_post = joint - per_x[:, None]
    log_q_new = log_sum_exp(log_post, axis=0) - math.log(log_px.shape[0])
    return float(np.mean(per_x)), log_q_new


def data_incorporation_step(
    gen: GenerativeLayer,
    q_tab: TabularDistribution,
    data: SoftDataset,
    limit: int = ENUM_LIMIT,
):
    """Mix the model posterior of Q with the data: Q -> (1/N) sum_n Q(h|x_n).

    Never decreases the data log-likelihood, and its fixed points are exactly
    the likelihood maximizers.  Returns the new table and the log-likelihood
    of the *input* table.
    """
    if q_tab.nh != gen.nh:
        raise ValueError(f"dim mismatch: decoder nh {gen.nh}, table nh {q_tab.nh}")
    log_px = _log_px_table(gen, data.X, limit=limit)
    ll, log_q_new = _em_step(log_px, q_tab.log_probs())
    return TabularDistribution.from_log(gen.nh, log_q_new), ll


@dataclass(frozen=True)
class BlmOracleResult:
    q: TabularDistribution  # the optimal latent marginal found
    u_d: float  # its data log-likelihood: the least upper bound for this decoder
    n_iter: int
    converged: bool


def blm_oracle(
    gen: GenerativeLayer,
    data: SoftDataset,
    tol: float = 1e-9,
    max_iter: int = 10000,
    limit: int = ENUM_LIMIT,
    tv_tol: float = 1e-10,
) -> BlmOracleResult:
    """Optimal latent marginal by iterating data incorporation from uniform.

    The objective is concave in Q, so the fixed point reached is a global
    maximizer (up to degenerate flat directions).  Convergence requires both
    a log-likelihood gain below ``tol`` and a total-variation step below
    ``tv_tol``; the gain alone can vanish while the iterate still drifts
    along near-flat boundary directions.
    """
    log_px = _log_px_table(gen, data.X, limit=limit)
    log_q = np.full(2**gen.nh, -gen.nh * math.log(2.0))
    q_lin = np.exp(log_q)
    prev = -np.inf
    for it in range(1, max_iter + 1):
        ll, log_q_new = _em_step(log_px, log_q)
        q_new = np.exp(log_q_new)
        tv = 0.5 * np.abs(q_new - q_lin).sum()
        if ll - prev < tol and tv < tv_tol and np.isfinite(prev):
            return BlmOracleResult(TabularDistribution.from_log(gen.nh, log_q), ll, it, True)
        prev = ll
        log_q = log_q_new
        q_lin = q_new
    ll, _ = _em_step(log_px, log_q)
    return BlmOracleResult(TabularDistribution.from_log(gen.nh, log_q), ll, max_iter, False)


def rbm_log_marginal_blocks(top: Rbm, limit: int = ENUM_LIMIT, block: int = STATE_BLOCK):
    """Yield exact log P_top(h) over the top RBM's visible states, in block order."""
    log_z = log_partition_exact(top, limit=limit, block=block)
    for states in binary_state_blocks(top.nv, block=block, limit=limit):
        yield states, states @ top.b_vis + softplus(states @ top.W.T + top.b_hid).sum(
            axis=1
        ) - log_z


def kl_gap_bound(q_tab: TabularDistribution, top: Rbm, limit: int = ENUM_LIMIT) -> float:
    """KL(Q || P_top): bound on the likelihood lost by using this top model.

    +inf when the top model puts zero mass where Q does not.
    """
    if q_tab.nh != top.nv:
        raise ValueError(f"dim mismatch: table nh {q_tab.nh}, top visible {top.nv}")
    total = 0.0
    pos = 0
    log_q = q_tab.log_probs()
    for states, log_p in rbm_log_marginal_blocks(top, limit=limit):
        q = q_tab.probs[pos : pos + states.shape[0]]
        lq = log_q[pos : pos + states.shape[0]]
        mask = q > 0.0
        if np.any(mask & ~np.isfinite(log_p)):
            return math.inf
        total += float(np.sum(q[mask] * (lq[mask] - log_p[mask])))
        pos += states.shape[0]
    return total


def layerwise_p1_ll(
    r: Rbm,
    data: SoftDataset,
    eval_data: SoftDataset,
    limit: int = ENUM_LIMIT,
    block: int = STATE_BLOCK,
) -> float:
    """Likelihood of the one-Gibbs-step distribution x -> h -> x of an RBM.

    Pushes ``data`` through the RBM's own inference to form the latent
    mixture, then scores ``eval_data`` under decoder + mixture.  This is the
    layer-wise consistency objective, distinct from the RBM's own likelihood.
    """
    q_d = mixture_from(inference_from_rbm(r), data)
    return blm_bound_exact(generative_from_rbm(r), q_d, eval_data, limit=limit, block=block)
