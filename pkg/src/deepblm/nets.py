"""Feed-forward sigmoid nets trained by backpropagation on cross-entropy.

Two auto-associator flavours: the classic tied-weight net x -> h -> x, and
the rich-inference variant x -> h' -> h -> x whose two-layer encoder buys a
better posterior without adding a single generative parameter (the encoder
is discarded from the generative model).  Hidden activations stay soft
during training; nothing is sampled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blm import GenerativeLayer, InferenceModel
from .datasets import SoftDataset
from .numerics import RngState, bernoulli_xent, sigmoid


@dataclass
class AffineSigmoidLayer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.W.shape[0] != self.b.size:
            raise ValueError(f"inconsistent dims: W {self.W.shape}, b {self.b.size}")


@dataclass
class VanillaAe:
    """Tied auto-associator: encoder W, decoder W^T, free decoder bias."""

    W: np.ndarray  # (nh, nv)
    b_hid: np.ndarray
    b_vis: np.ndarray

    @property
    def nv(self) -> int:
        return self.W.shape[1]

    @property
    def nh(self) -> int:
        return self.W.shape[0]

    def layers(self):
        return [AffineSigmoidLayer(self.W, self.b_hid), AffineSigmoidLayer(self.W.T, self.b_vis)]

    def to_json(self) -> dict:
        return {
            "type": "vanilla_ae",
            "nv": self.nv,
            "nh": self.nh,
            "W": self.W.tolist(),
            "b_hid": self.b_hid.tolist(),
            "b_vis": self.b_vis.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VanillaAe":
        if obj.get("type") != "vanilla_ae":
            raise ValueError(f"not a vanilla_ae payload: type={obj.get('type')!r}")
        return cls(np.asarray(obj["W"]), np.asarray(obj["b_hid"]), np.asarray(obj["b_vis"]))


@dataclass
class Aeri:
    """Rich-inference auto-associator: two encoder layers, one decoder layer.

    The decoder alone defines P(x|h); the encoder never joins the generative
    model.
    """

    enc1: AffineSigmoidLayer  # (nh', nv)
    enc2: AffineSigmoidLayer  # (nh, nh')
    dec: AffineSigmoidLayer  # (nv, nh)

    @property
    def nv(self) -> int:
        return self.enc1.W.shape[1]

    @property
    def nh(self) -> int:
        return self.enc2.W.shape[0]

    def layers(self):
        return [self.enc1, self.enc2, self.dec]

    def to_json(self) -> dict:
        return {
            "type": "aeri",
            "nv": self.nv,
            "nh_prime": self.enc1.W.shape[0],
            "nh": self.nh,
            "enc1_W": self.enc1.W.tolist(),
            "enc1_b": self.enc1.b.tolist(),
            "enc2_W": self.enc2.W.tolist(),
            "enc2_b": self.enc2.b.tolist(),
            "dec_W": self.dec.W.tolist(),
            "dec_b": self.dec.b.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Aeri":
        if obj.get("type") != "aeri":
            raise ValueError(f"not an aeri payload: type={obj.get('type')!r}")
        return cls(
            AffineSigmoidLayer(np.asarray(obj["enc1_W"]), np.asarray(obj["enc1_b"])),
            AffineSigmoidLayer(np.asarray(obj["enc2_W"]), np.asarray(obj["enc2_b"])),
            AffineSigmoidLayer(np.asarray(obj["dec_W"]), np.asarray(obj["dec_b"])),
        )


def net_forward(layers, x):
    """Chain sigmoid(W a + b); returns [x, a_1, ..., a_L]."""
    acts = [np.asarray(x, dtype=np.float64)]
    for layer in layers:
        if acts[-1].shape[-1] != layer.W.shape[1]:
            raise ValueError(
                f"dim mismatch: activation {acts[-1].shape[-1]} vs layer input {layer.W.shape[1]}"
            )
        acts.append(sigmoid(acts[-1] @ layer.W.T + layer.b))
    return acts


def forward(net, x):
    """Per-layer activations of an auto-associator on one input."""
    return net_forward(net.layers(), x)


def net_backprop_xent(layers, x, target):
    """Exact gradients of bernoulli_xent(target, output) for each layer.

    Gradients point in the ascent direction.  Returns ([(gW, gb)], acts).
    """
    acts = net_forward(layers, x)
    target = np.asarray(target, dtype=np.float64)
    if target.shape[-1] != acts[-1].shape[-1]:
        raise ValueError("dim mismatch between target and output")
    delta = target - acts[-1]  # d xent / d output-logits
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        grads[i] = (np.outer(delta, acts[i]), delta)
        if i > 0:
            a = acts[i]
            delta = (layers[i].W.T @ delta) * a * (1.0 - a)
    return grads, acts


def backprop_xent(net, x, target) -> dict:
    """Net-level gradient dict; the tied net folds both paths into its single W."""
    grads, _ = net_backprop_xent(net.layers(), x, target)
    if isinstance(net, VanillaAe):
        (g_enc, g_bh), (g_dec, g_bv) = grads
        return {"W": g_enc + g_dec.T, "b_hid": g_bh, "b_vis": g_bv}
    (g1, gb1), (g2, gb2), (gd, gbd) = grads
    return {
        "enc1_W": g1,
        "enc1_b": gb1,
        "enc2_W": g2,
        "enc2_b": gb2,
        "dec_W": gd,
        "dec_b": gbd,
    }


def reconstruction_ll(net, data: SoftDataset) -> float:
    """Mean per-sample log-likelihood of reproducing each input."""
    out = data.X
    for layer in net.layers():
        out = sigmoid(out @ layer.W.T + layer.b)
    return float(np.mean(bernoulli_xent(data.X, out)))


def init_net(kind: str, sizes, init_sigma: float, rng: RngState):
    g = rng.generator()
    if kind == "vanilla":
        nv, nh = sizes
        return VanillaAe(g.normal(0.0, init_sigma, (nh, nv)), np.zeros(nh), np.zeros(nv))
    if kind == "aeri":
        nv, nhp, nh = sizes
        return Aeri(
            AffineSigmoidLayer(g.normal(0.0, init_sigma, (nhp, nv)), np.zeros(nhp)),
            AffineSigmoidLayer(g.normal(0.0, init_sigma, (nh, nhp)), np.zeros(nh)),
            AffineSigmoidLayer(g.normal(0.0, init_sigma, (nv, nh)), np.zeros(nv)),
        )
    raise ValueError(f"unknown auto-associator kind: {kind!r}")


def train_autoassociator(
    kind: str,
    sizes,
    data: SoftDataset,
    lr: float,
    epochs: int,
    init_sigma: float,
    rng: RngState,
):
    """Per-sample SGD ascent on the reconstruction log-likelihood.

    Returns (net, final mean training reconstruction log-likelihood).
    """
    if lr < 0:
        raise ValueError(f"negative learning rate: {lr}")
    net = init_net(kind, sizes, init_sigma, rng.child(0))
    g = rng.child(1).generator()
    X = data.X
    n = X.shape[0]
    if isinstance(net, VanillaAe):
        W, bh, bv = net.W, net.b_hid, net.b_vis
        for _ in range(epochs):
            for i in g.permutation(n):
                x = X[i]
                h = sigmoid(W @ x + bh)
                y = sigmoid(W.T @ h + bv)
                d_out = x - y
                d_hid = (W @ d_out) * h * (1.0 - h)
                W += lr * (np.outer(d_hid, x) + np.outer(d_out, h).T)
                bv += lr * d_out
                bh += lr * d_hid
    else:
        W1, b1 = net.enc1.W, net.enc1.b
        W2, b2 = net.enc2.W, net.enc2.b
        Wd, bd = net.dec.W, net.dec.b
        for _ in range(epochs):
            for i in g.permutation(n):
                x = X[i]
                hp = sigmoid(W1 @ x + b1)
                h = sigmoid(W2 @ hp + b2)
                y = sigmoid(Wd @ h + bd)
                d_out = x - y
                d_h = (Wd.T @ d_out) * h * (1.0 - h)
                d_hp = (W2.T @ d_h) * hp * (1.0 - hp)
                Wd += lr * np.outer(d_out, h)
                bd += lr * d_out
                W2 += lr * np.outer(d_h, hp)
                b2 += lr * d_h
                W1 += lr * np.outer(d_hp, x)
                b1 += lr * d_hp
    return net, reconstruction_ll(net, data)


def as_generative_layer(net) -> GenerativeLayer:
    """Decoder only; this is the whole generative contribution of the net."""
    if isinstance(net, VanillaAe):
        return GenerativeLayer(net.W.T.copy(), net.b_vis.copy())
    return GenerativeLayer(net.dec.W.copy(), net.dec.b.copy())


def as_inference_model(net) -> InferenceModel:
    """Encoder only; used to build latent targets and bounds, never counted."""
    if isinstance(net, VanillaAe):
        return InferenceModel([(net.W.copy(), net.b_hid.copy())])
    return InferenceModel(
        [(net.enc1.W.copy(), net.enc1.b.copy()), (net.enc2.W.copy(), net.enc2.b.copy())]
    )


def save_net(net, path) -> None:
    Path(path).write_text(json.dumps(net.to_json()) + "\n")


def load_net(path):
    obj = json.loads(Path(path).read_text())
    if obj.get("type") == "vanilla_ae":
        return VanillaAe.from_json(obj)
    return Aeri.from_json(obj)
