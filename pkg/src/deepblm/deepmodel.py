"""Two-layer deep generative model: decoder below, RBM on top.

The model is P(x) = sum_h P(x|h) P_top(h) with P_top the exact marginal of
the top RBM over its visible units (which are the decoder's latent units).
The inference model that produced the decoder is carried along for bound
evaluation but is not part of the generative model and adds no parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blm import (
    GenerativeLayer,
    InferenceModel,
    TabularDistribution,
    log_mixture_ll_per_x,
    rbm_log_marginal_blocks,
)
from .datasets import SoftDataset
from .numerics import (
    ENUM_LIMIT,
    STATE_BLOCK,
    RngState,
    binary_states,
    log_sum_exp,
    sigmoid,
    softplus,
)
from .rbm import Rbm, gibbs_sample, log_partition_exact


@dataclass
class DeepGenModel:
    bottom: GenerativeLayer
    bottom_inference: InferenceModel
    top: Rbm

    def __post_init__(self):
        if self.bottom.nh != self.top.nv:
            raise ValueError(
                f"layer mismatch: decoder latent dim {self.bottom.nh} "
                f"!= top visible dim {self.top.nv}"
            )

    def to_json(self) -> dict:
        return {
            "type": "deep_gen_model",
            "bottom": self.bottom.to_json(),
            "bottom_inference": self.bottom_inference.to_json(),
            "top": self.top.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DeepGenModel":
        if obj.get("type") != "deep_gen_model":
            raise ValueError(f"not a deep model payload: type={obj.get('type')!r}")
        return cls(
            GenerativeLayer.from_json(obj["bottom"]),
            InferenceModel.from_json(obj["bottom_inference"]),
            Rbm.from_json(obj["top"]),
        )


def extract_target(
    q: InferenceModel,
    data: SoftDataset,
    mode: str = "mean",
    rng: RngState | None = None,
    n_draws: int = 1,
) -> SoftDataset:
    """Latent training set for the upper layer: the data pushed through q.

    ``mean`` keeps the activation probabilities as soft samples (a lossless
    representation of the latent mixture for moment-based training);
    ``sample`` draws ``n_draws`` binary latent vectors per data point.
    """
    mu = q.encode(data.X)
    if mode == "mean":
        return SoftDataset(f"{data.name}-latent", mu)
    if mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        g = rng.generator()
        draws = (g.random((n_draws,) + mu.shape) < mu).astype(np.float64)
        return SoftDataset(f"{data.name}-latent", draws.reshape(-1, mu.shape[1]))
    raise ValueError(f"unknown target mode: {mode!r}")


def tabulate_top_marginal(top: Rbm, limit: int = ENUM_LIMIT, block: int = STATE_BLOCK) -> np.ndarray:
    """Dense log P_top(h) over all 2^nv_top latent states."""
    out = np.empty(2**top.nv)
    pos = 0
    for states, log_p in rbm_log_marginal_blocks(top, limit=limit, block=block):
        out[pos : pos + states.shape[0]] = log_p
        pos += states.shape[0]
    return out


def deep_ll_exact(
    m: DeepGenModel, ds: SoftDataset, limit: int = ENUM_LIMIT, block: int = STATE_BLOCK
) -> float:
    """Mean log P(x) (nats/sample) by exact enumeration of the latent layer."""
    log_tab = tabulate_top_marginal(m.top, limit=limit, block=block)
    return float(np.mean(log_mixture_ll_per_x(m.bottom, ds.X, log_tab, limit, block)))


def deep_ll_tabular_top(
    gen: GenerativeLayer,
    top_tab: TabularDistribution,
    ds: SoftDataset,
    limit: int = ENUM_LIMIT,
    block: int = STATE_BLOCK,
) -> float:
    """Deep likelihood when the latent marginal is an explicit table.

    With the optimal table this realizes the latent-marginal bound exactly
    (the equality case of the layer-wise guarantee).
    """
    return float(np.mean(log_mixture_ll_per_x(gen, ds.X, top_tab.log_probs(), limit, block)))


def deep_sample(m: DeepGenModel, gibbs_steps: int, n: int, rng: RngState) -> np.ndarray:
    """Sample h from the top RBM by Gibbs, then one decoder pass x ~ P(x|h)."""
    h = gibbs_sample(m.top, gibbs_steps, n, rng.child(0))
    p = sigmoid(m.bottom.logits(h))
    g = rng.child(1).generator()
    return (g.random(p.shape) < p).astype(np.float64)


def exact_posterior(
    m: DeepGenModel, X: np.ndarray, limit: int = ENUM_LIMIT
) -> np.ndarray:
    """P(h|x) over all latent states, one row per sample (rows sum to 1)."""
    states = binary_states(m.bottom.nh, limit=limit)
    logits = m.bottom.logits(states)
    log_px = X @ logits.T - softplus(logits).sum(axis=1)
    log_z = log_partition_exact(m.top, limit=limit)
    log_top = states @ m.top.b_vis + softplus(states @ m.top.W.T + m.top.b_hid).sum(axis=1) - log_z
    joint = log_px + log_top
    return np.exp(joint - log_sum_exp(joint, axis=1)[:, None])


@dataclass
class DeepGradients:
    dec_W: np.ndarray
    dec_b: np.ndarray
    top_W: np.ndarray
    top_b_vis: np.ndarray
    top_b_hid: np.ndarray


def full_gradient_oracle(m: DeepGenModel, ds: SoftDataset, limit: int = ENUM_LIMIT) -> DeepGradients:
    """Exact gradient of the mean deep log-likelihood over all parameters.

    The usual intractable step, inference of P(h|x) under both layers at
    once, is done by enumeration; the top-model expectation term comes from
    the exact partition function.  Small models only; used as a test oracle.
    """
    X = ds.X
    n = X.shape[0]
    states = binary_states(m.bottom.nh, limit=limit)
    post = exact_posterior(m, X, limit=limit)  # (N, H)

    # Decoder: E_{h ~ P(h|x)} [ (x - p(h)) outer h ], averaged over samples.
    p_dec = sigmoid(m.bottom.logits(states))  # (H, nv)
    w_h = post.sum(axis=0)  # (H,)
    resid = post.T @ X - w_h[:, None] * p_dec  # (H, nv)
    dec_W = resid.T @ states / n
    dec_b = resid.sum(axis=0) / n

    # Top RBM: posterior-weighted sufficient statistics minus exact model term.
    q_h = w_h / n  # mixture weight of each latent state under the posterior
    ph_data = sigmoid(states @ m.top.W.T + m.top.b_hid)  # (H, nh2)
    log_z = log_partition_exact(m.top, limit=limit)
    log_top = states @ m.top.b_vis + softplus(states @ m.top.W.T + m.top.b_hid).sum(axis=1) - log_z
    p_top = np.exp(log_top)
    top_W = ph_data.T @ (q_h[:, None] * states) - ph_data.T @ (p_top[:, None] * states)
    top_b_vis = q_h @ states - p_top @ states
    top_b_hid = q_h @ ph_data - p_top @ ph_data
    return DeepGradients(dec_W, dec_b, top_W, top_b_vis, top_b_hid)


def param_count(model) -> int:
    """Generative parameters only.

    Deep model: decoder weights + visible bias, plus the whole top RBM.
    Shallow RBM: weights + both biases.  Inference models never count.
    """
    if isinstance(model, Rbm):
        return model.W.size + model.nv + model.nh
    if isinstance(model, DeepGenModel):
        top = model.top
        return model.bottom.W.size + model.bottom.nv + top.W.size + top.nv + top.nh
    raise TypeError(f"cannot count parameters of {type(model).__name__}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model.to_json()) + "\n")


def load_model(path):
    obj = json.loads(Path(path).read_text())
    if obj.get("type") == "rbm":
        return Rbm.from_json(obj)
    return DeepGenModel.from_json(obj)
