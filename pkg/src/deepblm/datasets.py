"""Benchmark datasets, deterministic splits, and likelihood baselines.

Two 100-pixel datasets: the synthetic liquid-conservation images ("tea") and
the center crops of MNIST digits ("cmnist").  Pixel values live in [0, 1]
and are used directly as Bernoulli probabilities everywhere downstream; no
stochastic binarization is applied unless asked for explicitly.
"""

from __future__ import annotations

import gzip
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import RngState, bernoulli_xent

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

TEA_SIZE = 243  # 3^5 cup fill combinations
CMNIST_SIZE = 12000
CMNIST_CROP = slice(9, 19)  # rows/cols 9..18 of a 28x28 image


@dataclass
class SoftDataset:
    """Samples with entries in [0, 1], one row per sample."""

    name: str
    X: np.ndarray

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError(f"expected 2-d sample array, got shape {self.X.shape}")
        if self.X.size and (self.X.min() < 0.0 or self.X.max() > 1.0):
            raise ValueError("sample entries must lie in [0, 1]")

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, indices, name: str | None = None) -> "SoftDataset":
        return SoftDataset(name or self.name, self.X[np.asarray(indices)])


@dataclass(frozen=True)
class SplitSpec:
    """Sizes of a train/valid/test partition plus the shuffle seed."""

    n_train: int
    n_valid: int
    n_test: int
    seed: int = 0


def gen_tea() -> SoftDataset:
    """All 243 liquid-conservation images.

    Each 10x10 image holds a 10x5 pot (columns 0-4) and five 2x5 cups
    stacked in the right half.  Every container fills bottom-up by whole
    rows and the pot level is 10 minus the total cup rows, so each image
    has exactly 50 ones.  Sample k encodes the cup levels as the base-3
    digits of k, most significant digit first.
    """
    X = np.zeros((TEA_SIZE, 100))
    for k in range(TEA_SIZE):
        fills = [(k // 3**p) % 3 for p in range(4, -1, -1)]
        img = np.zeros((10, 10))
        pot_rows = 10 - sum(fills)
        if pot_rows:
            img[10 - pot_rows :, :5] = 1.0
        for c, f in enumerate(fills):
            if f:
                img[2 * c + 2 - f : 2 * c + 2, 5:] = 1.0
        X[k] = img.ravel()
    return SoftDataset("tea", X)


def parse_idx_images(payload: bytes) -> np.ndarray:
    """Decode a big-endian IDX image payload into a (count, rows, cols) uint8 array."""
    if len(payload) < 16:
        raise ValueError(f"IDX header truncated: {len(payload)} bytes")
    magic, count, rows, cols = struct.unpack(">IIII", payload[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise ValueError(
            f"bad IDX image magic: expected {IDX_IMAGE_MAGIC:#010x}, got {magic:#010x}"
        )
    need = 16 + count * rows * cols
    if len(payload) < need:
        raise ValueError(
            f"IDX payload truncated: dims promise {need} bytes, got {len(payload)}"
        )
    data = np.frombuffer(payload, dtype=np.uint8, count=count * rows * cols, offset=16)
    return data.reshape(count, rows, cols)


def build_cmnist(mnist_train_images: bytes) -> SoftDataset:
    """10x10 center crops of the first 12000 MNIST training digits, scaled to [0, 1]."""
    imgs = parse_idx_images(mnist_train_images)
    if imgs.shape[1:] != (28, 28):
        raise ValueError(f"bad IDX image dims: expected 28x28, got {imgs.shape[1]}x{imgs.shape[2]}")
    if imgs.shape[0] < CMNIST_SIZE:
        raise ValueError(f"bad IDX image count: need >= {CMNIST_SIZE}, got {imgs.shape[0]}")
    crop = imgs[:CMNIST_SIZE, CMNIST_CROP, CMNIST_CROP].astype(np.float64) / 255.0
    return SoftDataset("cmnist", crop.reshape(CMNIST_SIZE, 100))


def split(ds: SoftDataset, spec: SplitSpec):
    """Deterministic shuffle + contiguous slicing into (train, valid, test)."""
    total = spec.n_train + spec.n_valid + spec.n_test
    if total > len(ds):
        raise ValueError(f"oversized split: {total} > {len(ds)} samples")
    perm = RngState(spec.seed).generator().permutation(len(ds))
    a, b = spec.n_train, spec.n_train + spec.n_valid
    return (
        ds.subset(perm[:a], f"{ds.name}-train"),
        ds.subset(perm[a:b], f"{ds.name}-valid"),
        ds.subset(perm[b:total], f"{ds.name}-test"),
    )


def binarize(ds: SoftDataset, rng: RngState) -> SoftDataset:
    """Sample each pixel as Bernoulli(value); sensitivity-check helper."""
    g = rng.generator()
    return SoftDataset(ds.name + "-bin", (g.random(ds.X.shape) < ds.X).astype(np.float64))


def baseline_uniform(dim: int) -> float:
    """Log-likelihood per sample of the uniform coder over binary images."""
    if dim < 0:
        raise ValueError(f"negative dim: {dim}")
    return -dim * math.log(2.0)  # dim == 0 degenerates to the empty product


def perfect_model_ll_tea() -> float:
    """Log-likelihood per sample when all 243 images get probability 1/243."""
    return math.log(1.0 / TEA_SIZE)


def fit_independent_bernoulli(train: SoftDataset) -> np.ndarray:
    """Per-pixel Bernoulli probabilities with add-one smoothing.

    Smoothing keeps held-out likelihoods finite when a pixel is constant in
    the training set.
    """
    if len(train) == 0:
        raise ValueError("empty training set")
    return (train.X.sum(axis=0) + 1.0) / (len(train) + 2.0)


def independent_bernoulli_ll(p: np.ndarray, ds: SoftDataset) -> float:
    """Mean per-sample log-likelihood of ``ds`` under pixel-wise Bernoulli ``p``."""
    return float(np.mean(bernoulli_xent(ds.X, p)))


def save_dataset(ds: SoftDataset, out_dir, seed: int | None = None) -> Path:
    """Write <name>.csv (one sample per row) plus a JSON sidecar; returns the CSV path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{ds.name}.csv"
    np.savetxt(csv_path, ds.X, fmt="%.17g", delimiter=",")
    sidecar = {"name": ds.name, "dim": ds.dim, "count": len(ds), "seed": seed}
    (out_dir / f"{ds.name}.json").write_text(json.dumps(sidecar, indent=1) + "\n")
    return csv_path


def load_dataset(csv_path) -> SoftDataset:
    csv_path = Path(csv_path)
    X = np.loadtxt(csv_path, delimiter=",", ndmin=2)
    name = csv_path.stem
    sidecar = csv_path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        name = meta.get("name", name)
        if meta.get("count") not in (None, X.shape[0]):
            raise ValueError(
                f"sidecar count {meta['count']} disagrees with {X.shape[0]} CSV rows"
            )
    return SoftDataset(name, X)


def read_payload(path) -> bytes:
    """Read a raw or gzipped IDX file."""
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw
