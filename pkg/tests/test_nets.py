import math

import numpy as np
import pytest
from helpers import all_states, bern_pmf, central_diff, random_soft_data, rel_err

from deepblm.datasets import SoftDataset
from deepblm.nets import (
    AffineSigmoidLayer,
    Aeri,
    VanillaAe,
    as_generative_layer,
    as_inference_model,
    backprop_xent,
    forward,
    init_net,
    load_net,
    net_backprop_xent,
    net_forward,
    reconstruction_ll,
    save_net,
    train_autoassociator,
)
from deepblm.numerics import RngState, bernoulli_xent, sigmoid


def random_vanilla(nv, nh, seed, scale=0.8):
    g = RngState(seed).generator()
    return VanillaAe(g.normal(0, scale, (nh, nv)), g.normal(0, scale, nh), g.normal(0, scale, nv))


def random_aeri(nv, nhp, nh, seed, scale=0.8):
    g = RngState(seed).generator()
    return Aeri(
        AffineSigmoidLayer(g.normal(0, scale, (nhp, nv)), g.normal(0, scale, nhp)),
        AffineSigmoidLayer(g.normal(0, scale, (nh, nhp)), g.normal(0, scale, nh)),
        AffineSigmoidLayer(g.normal(0, scale, (nv, nh)), g.normal(0, scale, nv)),
    )


class TestForward:
    def test_zero_net_is_half_everywhere(self):
        net = VanillaAe(np.zeros((3, 5)), np.zeros(3), np.zeros(5))
        acts = forward(net, np.ones(5))
        assert np.all(acts[1] == 0.5)
        assert np.all(acts[2] == 0.5)

    def test_saturating_unit(self):
        net = VanillaAe(np.array([[40.0]]), np.zeros(1), np.zeros(1))
        out = forward(net, np.array([1.0]))[-1]
        assert out[0] > 0.999999

    def test_matches_hand_computation(self):
        W1 = np.array([[0.5, -1.0], [2.0, 0.25]])
        b1 = np.array([0.1, -0.2])
        W2 = np.array([[1.5, 0.0], [-0.5, 1.0]])
        b2 = np.array([0.0, 0.3])
        layers = [AffineSigmoidLayer(W1, b1), AffineSigmoidLayer(W2, b2)]
        x = np.array([0.8, 0.3])
        a1 = 1 / (1 + np.exp(-(W1 @ x + b1)))
        a2 = 1 / (1 + np.exp(-(W2 @ a1 + b2)))
        acts = net_forward(layers, x)
        assert np.allclose(acts[1], a1, atol=1e-15)
        assert np.allclose(acts[2], a2, atol=1e-15)

    def test_dim_mismatch(self):
        net = random_vanilla(4, 2, seed=0)
        with pytest.raises(ValueError, match="mismatch"):
            forward(net, np.zeros(3))


class TestBackprop:
    def test_vanilla_finite_differences(self):
        net = random_vanilla(6, 4, seed=1)
        g = RngState(2).generator()
        x, t = g.random(6), g.random(6)
        grads = backprop_xent(net, x, t)

        def loss(flat):
            W = flat[:24].reshape(4, 6)
            bh = flat[24:28]
            bv = flat[28:]
            return bernoulli_xent(t, forward(VanillaAe(W, bh, bv), x)[-1])

        x0 = np.concatenate([net.W.ravel(), net.b_hid, net.b_vis])
        fd = central_diff(loss, x0)
        ana = np.concatenate([grads["W"].ravel(), grads["b_hid"], grads["b_vis"]])
        assert rel_err(ana, fd) < 1e-4

    def test_aeri_finite_differences(self):
        net = random_aeri(5, 4, 3, seed=3)
        g = RngState(4).generator()
        x, t = g.random(5), g.random(5)
        grads = backprop_xent(net, x, t)
        shapes = [(4, 5), (4,), (3, 4), (3,), (5, 3), (5,)]
        sizes = [int(np.prod(s)) for s in shapes]

        def loss(flat):
            parts = np.split(flat, np.cumsum(sizes)[:-1])
            n = Aeri(
                AffineSigmoidLayer(parts[0].reshape(4, 5), parts[1]),
                AffineSigmoidLayer(parts[2].reshape(3, 4), parts[3]),
                AffineSigmoidLayer(parts[4].reshape(5, 3), parts[5]),
            )
            return bernoulli_xent(t, forward(n, x)[-1])

        x0 = np.concatenate(
            [net.enc1.W.ravel(), net.enc1.b, net.enc2.W.ravel(), net.enc2.b,
             net.dec.W.ravel(), net.dec.b]
        )
        fd = central_diff(loss, x0)
        ana = np.concatenate(
            [grads["enc1_W"].ravel(), grads["enc1_b"], grads["enc2_W"].ravel(),
             grads["enc2_b"], grads["dec_W"].ravel(), grads["dec_b"]]
        )
        assert rel_err(ana, fd) < 1e-4

    def test_tied_gradient_is_sum_of_untied_paths(self):
        net = random_vanilla(5, 3, seed=5)
        g = RngState(6).generator()
        x, t = g.random(5), g.random(5)
        tied = backprop_xent(net, x, t)
        untied, _ = net_backprop_xent(net.layers(), x, t)
        (g_enc, _), (g_dec, _) = untied
        assert np.allclose(tied["W"], g_enc + g_dec.T, atol=1e-14)

    def test_perfect_saturated_fixed_point(self):
        # h copies x through saturated units and the decoder reproduces it
        big = 50.0
        net = VanillaAe(big * np.eye(3), np.full(3, -big / 2), np.full(3, -big / 2))
        x = np.array([1.0, 0.0, 1.0])
        grads = backprop_xent(net, x, x)
        assert np.max(np.abs(grads["W"])) < 1e-8
        assert np.max(np.abs(grads["b_vis"])) < 1e-8


class TestTraining:
    def test_zero_lr_no_change(self):
        ds = SoftDataset("d", random_soft_data(12, 6, seed=7))
        net, _ = train_autoassociator("vanilla", (6, 3), ds, 0.0, 5, 0.3, RngState(8))
        ref = init_net("vanilla", (6, 3), 0.3, RngState(8).child(0))
        assert np.array_equal(net.W, ref.W)

    def test_tea_reconstruction_improves(self):
        from deepblm.datasets import SplitSpec, gen_tea, split

        tr, _, _ = split(gen_tea(), SplitSpec(81, 81, 81, seed=0))
        start = init_net("vanilla", (100, 16), 0.1, RngState(9).child(0))
        before = reconstruction_ll(start, tr)
        net, final = train_autoassociator("vanilla", (100, 16), tr, 0.01, 100, 0.1, RngState(9))
        assert final > before
        assert final == pytest.approx(reconstruction_ll(net, tr), abs=1e-12)

    def test_deterministic(self):
        ds = SoftDataset("d", random_soft_data(15, 5, seed=10))
        a, la = train_autoassociator("aeri", (5, 7, 3), ds, 0.05, 4, 0.2, RngState(11))
        b, lb = train_autoassociator("aeri", (5, 7, 3), ds, 0.05, 4, 0.2, RngState(11))
        assert la == lb
        assert np.array_equal(a.dec.W, b.dec.W)
        assert np.array_equal(a.enc1.W, b.enc1.W)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="kind"):
            init_net("conv", (3, 2), 0.1, RngState(0))


class TestModelViews:
    def test_aeri_split_sizes(self):
        net = random_aeri(6, 9, 4, seed=12)
        q = as_inference_model(net)
        gen = as_generative_layer(net)
        assert len(q.layers) == 2
        assert gen.nv == 6 and gen.nh == 4
        # generative parameter count: decoder weights plus visible bias only
        assert gen.W.size + gen.b.size == 6 * 4 + 6

    def test_vanilla_generative_count(self):
        net = random_vanilla(7, 3, seed=13)
        gen = as_generative_layer(net)
        assert gen.W.size + gen.b.size == 3 * 7 + 7

    def test_roundtrip_decode_encode(self):
        for net in (random_vanilla(6, 3, seed=14), random_aeri(6, 5, 3, seed=15)):
            x = RngState(16).generator().random(6)
            via_views = as_generative_layer(net).probs(as_inference_model(net).encode(x))
            direct = forward(net, x)[-1]
            assert np.allclose(via_views, direct, atol=1e-12)


def test_reconstruction_term_bounds_full_mixture():
    # per-sample: (1/N) sum_h P(x_n|h) q(h|x_n) <= sum_h P(x_n|h) q_D(h)
    ds = SoftDataset("d", random_soft_data(9, 10, seed=17, binary=True))
    net, _ = train_autoassociator("vanilla", (10, 6), ds, 0.05, 30, 0.2, RngState(18))
    gen = as_generative_layer(net)
    q = as_inference_model(net)
    mu = q.encode(ds.X)
    n = len(ds)
    for i in range(n):
        states = all_states(6)
        px_h = [bern_pmf(ds.X[i], 1 / (1 + np.exp(-(gen.W @ h + gen.b)))) for h in states]
        own = sum(p * bern_pmf(h, mu[i]) for p, h in zip(px_h, states)) / n
        mixture = sum(
            p * np.mean([bern_pmf(h, mu[m]) for m in range(n)])
            for p, h in zip(px_h, states)
        )
        assert own <= mixture + 1e-15


def test_serialization_round_trips(tmp_path):
    v = random_vanilla(5, 3, seed=19)
    a = random_aeri(5, 4, 2, seed=20)
    for net, name in ((v, "v.json"), (a, "a.json")):
        save_net(net, tmp_path / name)
        back = load_net(tmp_path / name)
        x = RngState(21).generator().random(5)
        assert np.allclose(forward(back, x)[-1], forward(net, x)[-1], atol=1e-15)


def test_training_ascends_mean_objective():
    # a couple of SGD epochs on a fixed batch should not decrease the objective
    ds = SoftDataset("d", random_soft_data(25, 8, seed=22))
    net0 = init_net("vanilla", (8, 4), 0.2, RngState(23).child(0))
    before = reconstruction_ll(net0, ds)
    _, after = train_autoassociator("vanilla", (8, 4), ds, 0.02, 50, 0.2, RngState(23))
    assert after > before
