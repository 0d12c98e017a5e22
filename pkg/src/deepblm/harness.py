"""Random-search experiment harness.

Draws hyper-parameters from fixed priors, trains one model family per
trial (shallow RBM, stacked RBMs, vanilla or rich-inference auto-encoder,
each completed by a top RBM), and records exact train/validation
log-likelihoods together with the latent-marginal bounds.  Trials are
independent and reproducible: each one derives every random stream from its
own 64-bit seed, so a results file is a pure function of (kind, seed) rows.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import blm, nets
from .datasets import SoftDataset
from .deepmodel import DeepGenModel, deep_ll_exact, extract_target, param_count
from .numerics import ENUM_LIMIT, RngState
from .rbm import Rbm, cd_k_train, exact_ll, init_rbm

KINDS = ("rbm", "srbm", "vanilla_ae", "aeri")

LR_LOW, LR_HIGH = 1e-5, 5e-2
RBM_HIDDEN_MAX = 19
DEEP_HIDDEN_MAX = 16
INFERENCE_HIDDEN_MAX = 500
RBM_INIT_SIGMA = 0.01


@dataclass(frozen=True)
class HyperParams:
    kind: str
    rbm_hidden: int
    deep_h1: int
    deep_h2: int
    inference_hidden: int
    cd_lr: float
    bp_lr: float
    cd_epochs: int
    bp_epochs: int
    init_sigma: float
    seed: int


def search_epochs(n: int) -> int:
    """Epoch budget 20 * (10000 / N), rounded to the nearest integer."""
    if n < 1:
        raise ValueError(f"dataset size must be >= 1, got {n}")
    return int(round(200000.0 / n))


def sample_hyperparams(kind: str, n: int, rng: RngState) -> HyperParams:
    """One draw from the search priors (layer sizes uniform, rates log-uniform)."""
    if kind not in KINDS:
        raise ValueError(f"unknown model kind: {kind!r}")
    g = rng.generator()
    epochs = search_epochs(n)
    return HyperParams(
        kind=kind,
        rbm_hidden=int(g.integers(1, RBM_HIDDEN_MAX + 1)),
        deep_h1=int(g.integers(1, DEEP_HIDDEN_MAX + 1)),
        deep_h2=int(g.integers(1, DEEP_HIDDEN_MAX + 1)),
        inference_hidden=int(g.integers(1, INFERENCE_HIDDEN_MAX + 1)),
        cd_lr=float(np.exp(g.uniform(math.log(LR_LOW), math.log(LR_HIGH)))),
        bp_lr=float(np.exp(g.uniform(math.log(LR_LOW), math.log(LR_HIGH)))),
        cd_epochs=epochs,
        bp_epochs=epochs,
        init_sigma=float(g.uniform(0.0, 1.0)),
        seed=int(g.integers(0, 2**63)),
    )


@dataclass
class ExperimentRecord:
    kind: str
    seed: int
    rbm_hidden: int
    deep_h1: int
    deep_h2: int
    inference_hidden: int
    cd_lr: float
    bp_lr: float
    cd_epochs: int
    bp_epochs: int
    init_sigma: float
    param_count: int
    ll_train: float
    ll_valid: float
    blm_train: float
    blm_valid: float
    blm_mode: str  # "exact" | "sampled" | "none"
    converged: bool
    wall_ms: int = field(compare=False)  # incidental; a record is a function of (kind, hp)


CSV_COLUMNS = [f.name for f in fields(ExperimentRecord)]


def _train_bottom(kind: str, hp: HyperParams, train: SoftDataset, rng: RngState):
    """Train the lower layer; returns (decoder, encoder)."""
    nv = train.dim
    if kind == "srbm":
        r = init_rbm(nv, hp.deep_h1, rng.child(0), RBM_INIT_SIGMA)
        r = cd_k_train(r, train, k=1, lr=hp.cd_lr, epochs=hp.cd_epochs, rng=rng.child(1))
        return blm.generative_from_rbm(r), blm.inference_from_rbm(r)
    if kind == "vanilla_ae":
        net, _ = nets.train_autoassociator(
            "vanilla", (nv, hp.deep_h1), train, hp.bp_lr, hp.bp_epochs, hp.init_sigma, rng
        )
    elif kind == "aeri":
        net, _ = nets.train_autoassociator(
            "aeri",
            (nv, hp.inference_hidden, hp.deep_h1),
            train,
            hp.bp_lr,
            hp.bp_epochs,
            hp.init_sigma,
            rng,
        )
    else:
        raise ValueError(f"unknown deep kind: {kind!r}")
    return nets.as_generative_layer(net), nets.as_inference_model(net)


def train_model(kind: str, hp: HyperParams, train: SoftDataset):
    """Full training pipeline for one trial; returns the generative model.

    Shallow kind gives an :class:`Rbm`; the deep kinds train the bottom
    layer, push the data through its encoder to get the latent target set,
    fit the top RBM on that, and return the composed model.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown model kind: {kind!r}")
    root = RngState(hp.seed)
    if kind == "rbm":
        r = init_rbm(train.dim, hp.rbm_hidden, root.child(0), RBM_INIT_SIGMA)
        return cd_k_train(r, train, k=1, lr=hp.cd_lr, epochs=hp.cd_epochs, rng=root.child(1))
    gen, q = _train_bottom(kind, hp, train, root.child(2))
    target = extract_target(q, train, mode="mean")
    top = init_rbm(gen.nh, hp.deep_h2, root.child(4), RBM_INIT_SIGMA)
    top = cd_k_train(top, target, k=1, lr=hp.cd_lr, epochs=hp.cd_epochs, rng=root.child(5))
    return DeepGenModel(gen, q, top)


def run_trial(
    kind: str,
    hp: HyperParams,
    train: SoftDataset,
    valid: SoftDataset,
    enum_limit: int = ENUM_LIMIT,
    sample_k: int = 1,
    compute_blm: bool = True,
    return_model: bool = False,
):
    """Train one model and evaluate it; never raises on poor training.

    The latent-marginal bounds fall back to the sampled estimator when the
    latent layer is too wide to enumerate; an unusable exact likelihood is
    recorded as NaN with ``converged`` cleared.
    """
    t0 = time.perf_counter()
    root = RngState(hp.seed)
    blm_mode = "none"
    model = train_model(kind, hp, train)
    if kind == "rbm":
        gen, q = blm.generative_from_rbm(model), blm.inference_from_rbm(model)
    else:
        gen, q = model.bottom, model.bottom_inference

    def safe(f, *args, **kw):
        try:
            return float(f(*args, **kw))
        except ValueError:
            return float("nan")

    if kind == "rbm":
        ll_train = safe(exact_ll, model, train, limit=enum_limit)
        ll_valid = safe(exact_ll, model, valid, limit=enum_limit)
    else:
        ll_train = safe(deep_ll_exact, model, train, limit=enum_limit)
        ll_valid = safe(deep_ll_exact, model, valid, limit=enum_limit)

    blm_train = blm_valid = float("nan")
    if compute_blm:
        if gen.nh <= enum_limit:
            blm_mode = "exact"
            blm_train = safe(blm.blm_bound_exact, gen, blm.mixture_from(q, train), train, limit=enum_limit)
            blm_valid = safe(blm.blm_bound_exact, gen, blm.mixture_from(q, valid), valid, limit=enum_limit)
        if blm_mode != "exact" or not (np.isfinite(blm_train) and np.isfinite(blm_valid)):
            blm_mode = "sampled"
            blm_train = safe(blm.blm_bound_sampled, gen, q, train, sample_k, root.child(6))
            blm_valid = safe(blm.blm_bound_sampled, gen, q, valid, sample_k, root.child(7))

    metrics = [ll_train, ll_valid] + ([blm_train, blm_valid] if compute_blm else [])
    converged = all(np.isfinite(v) for v in metrics)
    record = ExperimentRecord(
        kind=kind,
        seed=hp.seed,
        rbm_hidden=hp.rbm_hidden,
        deep_h1=hp.deep_h1,
        deep_h2=hp.deep_h2,
        inference_hidden=hp.inference_hidden,
        cd_lr=hp.cd_lr,
        bp_lr=hp.bp_lr,
        cd_epochs=hp.cd_epochs,
        bp_epochs=hp.bp_epochs,
        init_sigma=hp.init_sigma,
        param_count=param_count(model),
        ll_train=ll_train,
        ll_valid=ll_valid,
        blm_train=blm_train,
        blm_valid=blm_valid,
        blm_mode=blm_mode,
        converged=converged,
        wall_ms=int(1000 * (time.perf_counter() - t0)),
    )
    if return_model:
        return record, model
    return record


def _trial_worker(args):
    kind, hp, train, valid, enum_limit, sample_k, compute_blm = args
    return run_trial(kind, hp, train, valid, enum_limit, sample_k, compute_blm)


def run_trials(
    specs,
    train: SoftDataset,
    valid: SoftDataset,
    n_jobs: int = 1,
    enum_limit: int = ENUM_LIMIT,
    sample_k: int = 1,
    compute_blm: bool = True,
    on_record=None,
):
    """Run (kind, hp) trials, merging results in trial order.

    Trials are independent, so a worker pool only changes wall time, not the
    records.  ``on_record`` is called with each finished record in order
    (used for incremental flushing).
    """
    args = [(kind, hp, train, valid, enum_limit, sample_k, compute_blm) for kind, hp in specs]
    records = []
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            for rec in pool.map(_trial_worker, args):
                records.append(rec)
                if on_record:
                    on_record(rec)
    else:
        for a in args:
            rec = _trial_worker(a)
            records.append(rec)
            if on_record:
                on_record(rec)
    return records


def pareto_front(records, ll_attr: str = "ll_valid"):
    """Records not subsumed by one with fewer-or-equal parameters and strictly
    better likelihood.  Non-finite likelihoods are excluded up front; ties on
    both axes are all kept."""
    usable = [r for r in records if np.isfinite(getattr(r, ll_attr))]
    order = sorted(usable, key=lambda r: (r.param_count, -getattr(r, ll_attr)))
    front = []
    best = -np.inf
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and order[j].param_count == order[i].param_count:
            j += 1
        group_best = max(getattr(r, ll_attr) for r in order[i:j])
        best = max(best, group_best)
        front.extend(r for r in order[i:j] if getattr(r, ll_attr) >= best)
        i = j
    return front


def front_value(front, p: float, ll_attr: str = "ll_valid") -> float:
    """Best likelihood achievable with at most p parameters on this front."""
    vals = [getattr(r, ll_attr) for r in front if r.param_count <= p]
    return max(vals) if vals else -np.inf


def front_dominance_fraction(front_a, front_b, ll_attr: str = "ll_valid"):
    """Fraction of shared-range grid points where front_a strictly beats front_b."""
    if not front_a or not front_b:
        return 0.0, []
    lo = max(min(r.param_count for r in front_a), min(r.param_count for r in front_b))
    hi = min(max(r.param_count for r in front_a), max(r.param_count for r in front_b))
    grid = sorted(
        {r.param_count for r in front_a if lo <= r.param_count <= hi}
        | {r.param_count for r in front_b if lo <= r.param_count <= hi}
    )
    if not grid:
        return 0.0, []
    wins = [front_value(front_a, p, ll_attr) > front_value(front_b, p, ll_attr) for p in grid]
    return float(np.mean(wins)), grid


def deepness_check(
    train: SoftDataset,
    valid: SoftDataset,
    n_models: int,
    rng: RngState,
    n_jobs: int = 1,
    enum_limit: int = ENUM_LIMIT,
    threshold: float = 0.8,
) -> dict:
    """Train shallow-RBM and stacked clouds and compare validation Pareto fronts.

    The dataset counts as deep when the stacked front strictly beats the
    shallow one on at least ``threshold`` of the shared parameter range.
    """
    if n_models < 2:
        raise ValueError(f"need at least 2 models per family, got {n_models}")
    n = len(train)
    specs = [("rbm", sample_hyperparams("rbm", n, rng.child(2 * i))) for i in range(n_models)]
    specs += [("srbm", sample_hyperparams("srbm", n, rng.child(2 * i + 1))) for i in range(n_models)]
    records = run_trials(specs, train, valid, n_jobs=n_jobs, enum_limit=enum_limit, compute_blm=False)
    rbm_records = [r for r in records if r.kind == "rbm"]
    srbm_records = [r for r in records if r.kind == "srbm"]
    rbm_front = pareto_front(rbm_records)
    srbm_front = pareto_front(srbm_records)
    fraction, grid = front_dominance_fraction(srbm_front, rbm_front)
    return {
        "dataset": train.name,
        "n_models": n_models,
        "verdict": "deep" if fraction >= threshold else "not deep",
        "dominance_fraction": fraction,
        "grid": grid,
        "threshold": threshold,
        "rbm_front": [(r.param_count, r.ll_valid) for r in rbm_front],
        "srbm_front": [(r.param_count, r.ll_valid) for r in srbm_front],
        "records": [asdict(r) for r in records],
    }


def write_records_csv(path, records, append: bool = False) -> None:
    path = Path(path)
    mode = "a" if append and path.exists() else "w"
    with path.open(mode, newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        if mode == "w":
            writer.writeheader()
        for r in records:
            writer.writerow(asdict(r))


def read_records_csv(path):
    records = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                ExperimentRecord(
                    kind=row["kind"],
                    seed=int(row["seed"]),
                    rbm_hidden=int(row["rbm_hidden"]),
                    deep_h1=int(row["deep_h1"]),
                    deep_h2=int(row["deep_h2"]),
                    inference_hidden=int(row["inference_hidden"]),
                    cd_lr=float(row["cd_lr"]),
                    bp_lr=float(row["bp_lr"]),
                    cd_epochs=int(row["cd_epochs"]),
                    bp_epochs=int(row["bp_epochs"]),
                    init_sigma=float(row["init_sigma"]),
                    param_count=int(row["param_count"]),
                    ll_train=float(row["ll_train"]),
                    ll_valid=float(row["ll_valid"]),
                    blm_train=float(row["blm_train"]),
                    blm_valid=float(row["blm_valid"]),
                    blm_mode=row["blm_mode"],
                    converged=row["converged"] == "True",
                    wall_ms=int(row["wall_ms"]),
                )
            )
    return records


def write_manifest(path, dataset: str, split_seed, trial_count: int, master_seed: int) -> None:
    from . import __version__

    manifest = {
        "dataset": dataset,
        "split_seed": split_seed,
        "trial_count": trial_count,
        "master_seed": master_seed,
        "versions": {"deepblm": __version__, "numpy": np.__version__},
    }
    Path(path).write_text(json.dumps(manifest, indent=1) + "\n")
