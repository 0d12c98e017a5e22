import json
import math
import struct

import numpy as np
import pytest

from deepblm import datasets
from deepblm.numerics import RngState


def make_idx(images: np.ndarray) -> bytes:
    n, rows, cols = images.shape
    return struct.pack(">IIII", datasets.IDX_IMAGE_MAGIC, n, rows, cols) + images.astype(
        np.uint8
    ).tobytes()


class TestTea:
    def test_count_and_uniqueness(self):
        ds = datasets.gen_tea()
        assert len(ds) == 243
        assert ds.dim == 100
        assert len(np.unique(ds.X, axis=0)) == 243

    def test_fifty_ones_everywhere(self):
        ds = datasets.gen_tea()
        assert np.all(ds.X.sum(axis=1) == 50)
        assert set(np.unique(ds.X)) == {0.0, 1.0}

    def test_full_cups_empty_pot(self):
        # last sample in base-3 order: every cup at level 2, i.e. 10 cup rows
        ds = datasets.gen_tea()
        img = ds.X[242].reshape(10, 10)
        assert img[:, :5].sum() == 0
        assert img[:, 5:].sum() == 50

    def test_empty_cups_full_pot(self):
        img = datasets.gen_tea().X[0].reshape(10, 10)
        assert img[:, :5].sum() == 50
        assert img[:, 5:].sum() == 0

    def test_row_level_fill(self):
        # within any row, the pot columns share a single value (whole-row fill)
        ds = datasets.gen_tea()
        imgs = ds.X.reshape(243, 10, 10)
        pot = imgs[:, :, :5]
        assert np.all(pot.min(axis=2) == pot.max(axis=2))

    def test_liquid_at_bottom(self):
        imgs = datasets.gen_tea().X.reshape(243, 10, 10)
        pot_cols = imgs[:, :, 0]
        assert np.all(np.diff(pot_cols, axis=1) >= 0)  # never liquid above air

    def test_idempotent(self):
        assert np.array_equal(datasets.gen_tea().X, datasets.gen_tea().X)


class TestCmnist:
    def test_build_from_synthetic_idx(self):
        g = RngState(0).generator()
        imgs = g.integers(0, 256, size=(12500, 28, 28)).astype(np.uint8)
        ds = datasets.build_cmnist(make_idx(imgs))
        assert len(ds) == 12000
        assert ds.dim == 100
        # crop window is rows/cols 9..18 inclusive
        assert np.array_equal(
            ds.X[3].reshape(10, 10), imgs[3, 9:19, 9:19].astype(float) / 255.0
        )

    def test_zero_image_zero_sample(self):
        imgs = np.zeros((12000, 28, 28), dtype=np.uint8)
        ds = datasets.build_cmnist(make_idx(imgs))
        assert ds.X[0].sum() == 0.0

    def test_full_scale_maps_to_one(self):
        imgs = np.full((12000, 28, 28), 255, dtype=np.uint8)
        ds = datasets.build_cmnist(make_idx(imgs))
        assert np.all(ds.X == 1.0)

    def test_bad_magic(self):
        payload = struct.pack(">IIII", 0x00000801, 1, 28, 28) + bytes(784)
        with pytest.raises(ValueError, match="magic"):
            datasets.build_cmnist(payload)

    def test_truncated_payload(self):
        payload = struct.pack(">IIII", datasets.IDX_IMAGE_MAGIC, 12000, 28, 28) + bytes(100)
        with pytest.raises(ValueError, match="truncated"):
            datasets.build_cmnist(payload)

    def test_wrong_dims(self):
        imgs = np.zeros((12000, 14, 14), dtype=np.uint8)
        with pytest.raises(ValueError, match="dims"):
            datasets.build_cmnist(make_idx(imgs))

    def test_too_few_images(self):
        imgs = np.zeros((100, 28, 28), dtype=np.uint8)
        with pytest.raises(ValueError, match="count"):
            datasets.build_cmnist(make_idx(imgs))


class TestSplit:
    def test_tea_partition(self):
        ds = datasets.gen_tea()
        tr, va, te = datasets.split(ds, datasets.SplitSpec(81, 81, 81, seed=0))
        assert (len(tr), len(va), len(te)) == (81, 81, 81)
        merged = np.vstack([tr.X, va.X, te.X])
        assert np.array_equal(
            np.sort(merged.view([("", merged.dtype)] * 100), axis=0),
            np.sort(ds.X.view([("", ds.X.dtype)] * 100), axis=0),
        )

    def test_large_partition(self):
        g = RngState(1).generator()
        ds = datasets.SoftDataset("synth", g.random((12000, 100)))
        tr, va, te = datasets.split(ds, datasets.SplitSpec(4000, 4000, 4000, seed=3))
        assert (len(tr), len(va), len(te)) == (4000, 4000, 4000)

    def test_deterministic(self):
        ds = datasets.gen_tea()
        spec = datasets.SplitSpec(81, 81, 81, seed=9)
        a = datasets.split(ds, spec)
        b = datasets.split(ds, spec)
        for x, y in zip(a, b):
            assert np.array_equal(x.X, y.X)

    def test_different_seed_different_split(self):
        ds = datasets.gen_tea()
        a = datasets.split(ds, datasets.SplitSpec(81, 81, 81, seed=0))
        b = datasets.split(ds, datasets.SplitSpec(81, 81, 81, seed=1))
        assert not np.array_equal(a[0].X, b[0].X)

    def test_oversized_split(self):
        with pytest.raises(ValueError, match="oversized"):
            datasets.split(datasets.gen_tea(), datasets.SplitSpec(200, 200, 200))


class TestBaselines:
    def test_uniform(self):
        assert datasets.baseline_uniform(100) == pytest.approx(-69.3147, abs=1e-4)
        assert datasets.baseline_uniform(1) == pytest.approx(-math.log(2))
        assert datasets.baseline_uniform(0) == 0.0

    def test_perfect_model(self):
        ll = datasets.perfect_model_ll_tea()
        assert ll == pytest.approx(-5.4931, abs=1e-4)
        assert math.exp(ll) * 243 == pytest.approx(1.0, abs=1e-12)

    def test_smoothing_formula(self):
        ds = datasets.SoftDataset("ones", np.ones((1, 4)))
        p = datasets.fit_independent_bernoulli(ds)
        assert np.allclose(p, 2.0 / 3.0)

    def test_tea_bernoulli_in_paper_range(self):
        tea = datasets.gen_tea()
        tr, va, _ = datasets.split(tea, datasets.SplitSpec(81, 81, 81, seed=0))
        p = datasets.fit_independent_bernoulli(tr)
        ll = datasets.independent_bernoulli_ll(p, va)
        assert -52.3 <= ll <= -46.3

    def test_tea_baseline_ordering(self):
        tea = datasets.gen_tea()
        tr, va, _ = datasets.split(tea, datasets.SplitSpec(81, 81, 81, seed=0))
        bern = datasets.independent_bernoulli_ll(datasets.fit_independent_bernoulli(tr), va)
        assert datasets.baseline_uniform(100) < bern < datasets.perfect_model_ll_tea()


class TestSerialization:
    def test_round_trip(self, tmp_path):
        ds = datasets.gen_tea()
        path = datasets.save_dataset(ds, tmp_path, seed=0)
        back = datasets.load_dataset(path)
        assert back.name == "tea"
        assert np.array_equal(back.X, ds.X)
        meta = json.loads((tmp_path / "tea.json").read_text())
        assert meta == {"name": "tea", "dim": 100, "count": 243, "seed": 0}

    def test_rewrite_is_byte_identical(self, tmp_path):
        ds = datasets.gen_tea()
        p1 = datasets.save_dataset(ds, tmp_path / "a", seed=0)
        p2 = datasets.save_dataset(ds, tmp_path / "b", seed=0)
        assert p1.read_bytes() == p2.read_bytes()

    def test_sidecar_count_mismatch(self, tmp_path):
        ds = datasets.SoftDataset("x", np.zeros((3, 2)))
        path = datasets.save_dataset(ds, tmp_path)
        (tmp_path / "x.json").write_text(json.dumps({"name": "x", "count": 7}))
        with pytest.raises(ValueError, match="count"):
            datasets.load_dataset(path)

    def test_gzip_payload(self, tmp_path):
        import gzip

        raw = make_idx(np.zeros((12000, 28, 28), dtype=np.uint8))
        p = tmp_path / "imgs.gz"
        p.write_bytes(gzip.compress(raw))
        assert datasets.read_payload(p) == raw


def test_binarize_is_binary_and_seeded():
    ds = datasets.SoftDataset("s", np.full((50, 10), 0.5))
    a = datasets.binarize(ds, RngState(5))
    b = datasets.binarize(ds, RngState(5))
    assert set(np.unique(a.X)) <= {0.0, 1.0}
    assert np.array_equal(a.X, b.X)


def test_out_of_range_rejected():
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        datasets.SoftDataset("bad", np.array([[1.5, 0.0]]))
