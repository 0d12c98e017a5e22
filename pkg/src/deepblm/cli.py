"""Command-line entry point.

Subcommands: gen-data, train, eval, search, deepness, report.  Every command
takes explicit seeds, so reruns with identical arguments produce identical
files.  Exit codes: 0 ok, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import blm, datasets, harness
from .deepmodel import DeepGenModel, deep_ll_exact, load_model, save_model
from .numerics import ENUM_LIMIT, RngState
from .rbm import Rbm, exact_ll

TEA_SPLIT = (81, 81, 81)
CMNIST_SPLIT = (4000, 4000, 4000)


def _write_dataset_with_splits(ds, out_dir, sizes, seed, make_splits=True):
    paths = [datasets.save_dataset(ds, out_dir, seed=seed)]
    if make_splits:
        spec = datasets.SplitSpec(*sizes, seed=seed)
        for part in datasets.split(ds, spec):
            paths.append(datasets.save_dataset(part, out_dir, seed=seed))
    return paths


def cmd_gen_data(args) -> int:
    if args.dataset == "tea":
        ds = datasets.gen_tea()
        sizes = TEA_SPLIT
    else:
        payload = datasets.read_payload(args.mnist)
        ds = datasets.build_cmnist(payload)
        sizes = CMNIST_SPLIT
    paths = _write_dataset_with_splits(ds, args.out, sizes, args.split_seed, not args.no_splits)
    for p in paths:
        print(p)
    return 0


def _hyperparams_from_args(args, n: int) -> harness.HyperParams:
    epochs = args.epochs if args.epochs is not None else harness.search_epochs(n)
    return harness.HyperParams(
        kind=args.kind,
        rbm_hidden=args.rbm_hidden,
        deep_h1=args.h1,
        deep_h2=args.h2,
        inference_hidden=args.inference_hidden,
        cd_lr=args.cd_lr,
        bp_lr=args.bp_lr,
        cd_epochs=epochs,
        bp_epochs=epochs,
        init_sigma=args.init_sigma,
        seed=args.seed,
    )


def cmd_train(args) -> int:
    train = datasets.load_dataset(args.train)
    if args.binarize:
        train = datasets.binarize(train, RngState(args.seed, 777))
    hp = _hyperparams_from_args(args, len(train))
    model = harness.train_model(args.kind, hp, train)
    save_model(model, args.out)
    print(args.out)
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    train = datasets.load_dataset(args.train)
    valid = datasets.load_dataset(args.valid)
    if isinstance(model, Rbm):
        ll = exact_ll(model, valid, limit=args.limit)
        gen, q = blm.generative_from_rbm(model), blm.inference_from_rbm(model)
    else:
        ll = deep_ll_exact(model, valid, limit=args.limit)
        gen, q = model.bottom, model.bottom_inference
    if gen.nh <= args.limit:
        blm_train = blm.blm_bound_exact(gen, blm.mixture_from(q, train), train, limit=args.limit)
        blm_valid = blm.blm_bound_exact(gen, blm.mixture_from(q, valid), valid, limit=args.limit)
    else:
        blm_train = blm.blm_bound_sampled(gen, q, train, args.sample_k, RngState(args.seed, 1))
        blm_valid = blm.blm_bound_sampled(gen, q, valid, args.sample_k, RngState(args.seed, 2))
    print(json.dumps({"ll": ll, "blm_train": blm_train, "blm_valid": blm_valid}))
    return 0


def _sidecar_seed(csv_path):
    sidecar = Path(csv_path).with_suffix(".json")
    if sidecar.exists():
        return json.loads(sidecar.read_text()).get("seed")
    return None


def cmd_search(args) -> int:
    train = datasets.load_dataset(args.train)
    valid = datasets.load_dataset(args.valid)
    master = RngState(args.seed)
    specs = [
        (args.kind, harness.sample_hyperparams(args.kind, len(train), master.child(i)))
        for i in range(args.trials)
    ]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.exists():
        out.unlink()  # incremental flush appends; start clean

    def flush(rec):
        harness.write_records_csv(out, [rec], append=True)

    harness.run_trials(
        specs,
        train,
        valid,
        n_jobs=args.jobs,
        enum_limit=args.limit,
        sample_k=args.sample_k,
        on_record=flush,
    )
    harness.write_manifest(
        out.with_suffix(".manifest.json"),
        dataset=train.name,
        split_seed=_sidecar_seed(args.train),
        trial_count=args.trials,
        master_seed=args.seed,
    )
    print(out)
    return 0


def cmd_deepness(args) -> int:
    train = datasets.load_dataset(args.train)
    valid = datasets.load_dataset(args.valid)
    report = harness.deepness_check(
        train,
        valid,
        args.models,
        RngState(args.seed),
        n_jobs=args.jobs,
        enum_limit=args.limit,
        threshold=args.threshold,
    )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(report, indent=1) + "\n")
    print(f"{report['dataset']}: {report['verdict']} "
          f"(dominance {report['dominance_fraction']:.2f})")
    return 0


def cmd_report(args) -> int:
    records = []
    for path in args.results:
        records.extend(harness.read_records_csv(path))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {}
    for kind in sorted({r.kind for r in records}):
        subset = [r for r in records if r.kind == kind]
        front = harness.pareto_front(subset)
        harness.write_records_csv(out_dir / f"pareto_{kind}.csv", front)
        finite = [r.ll_valid for r in subset if np.isfinite(r.ll_valid)]
        summary[kind] = {
            "records": len(subset),
            "finite": len(finite),
            "best_ll_valid": max(finite) if finite else None,
            "front": [(r.param_count, r.ll_valid) for r in front],
        }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    print(out_dir / "summary.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepblm",
        description="Train and evaluate two-layer deep generative models "
        "with exact and latent-marginal likelihoods.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a benchmark dataset with default splits")
    p.add_argument("dataset", choices=["tea", "cmnist"])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mnist", help="raw IDX image file (required for cmnist; .gz ok)")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--no-splits", action="store_true", help="write only the full dataset")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model with explicit hyper-parameters")
    p.add_argument("--kind", choices=harness.KINDS, required=True)
    p.add_argument("--train", required=True, help="training CSV")
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rbm-hidden", type=int, default=10)
    p.add_argument("--h1", type=int, default=8)
    p.add_argument("--h2", type=int, default=8)
    p.add_argument("--inference-hidden", type=int, default=50)
    p.add_argument("--cd-lr", type=float, default=0.01)
    p.add_argument("--bp-lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=None, help="default: search budget for N")
    p.add_argument("--init-sigma", type=float, default=0.1)
    p.add_argument("--binarize", action="store_true", help="Bernoulli-sample soft inputs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="exact likelihood and latent-marginal bounds of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--limit", type=int, default=ENUM_LIMIT)
    p.add_argument("--sample-k", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("search", help="hyper-parameter random search over one model family")
    p.add_argument("--kind", choices=harness.KINDS, required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--limit", type=int, default=ENUM_LIMIT)
    p.add_argument("--sample-k", type=int, default=1)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("deepness", help="shallow-vs-stacked Pareto comparison")
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--models", type=int, required=True, help="models per family")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--limit", type=int, default=ENUM_LIMIT)
    p.add_argument("--threshold", type=float, default=0.8)
    p.set_defaults(func=cmd_deepness)

    p = sub.add_parser("report", help="aggregate result CSVs into Pareto tables")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen-data" and args.dataset == "cmnist" and not args.mnist:
        parser.error("cmnist requires --mnist pointing at the raw IDX image file")
    try:
        return args.func(args)
    except Exception as exc:  # runtime failure -> exit 1, usage errors exit 2 above
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
