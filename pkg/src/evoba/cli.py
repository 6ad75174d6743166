"""Command line interface: train a target model, run attack campaigns,
post-process reports, and run the multi-seed consistency study.

The dataset root can be given with --data-dir or the EVOBA_DATA_DIR
environment variable. Errors exit nonzero after printing one
machine-readable JSON line on stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import campaign as camp
from .attacks import CompleteRandomConfig, EvobaConfig, SimbaConfig
from .dataset import load_mnist_dataset, make_synthetic_dataset, sample_eval_pool
from .errors import ContractViolationError
from .model import MlpModel, train_sgd
from .oracle import ClassifierOracle
from .tensor import TensorShape

DATA_DIR_ENV = "EVOBA_DATA_DIR"


def _parse_ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _add_dataset_args(p):
    p.add_argument("--data-dir", default=None,
                   help=f"MNIST IDX directory (default: ${DATA_DIR_ENV})")
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--synthetic", action="store_true",
                   help="use the built-in synthetic dataset instead of files")
    p.add_argument("--synthetic-n", type=int, default=1500)
    p.add_argument("--synthetic-shape", default="28,28,1")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dataset-seed", type=int, default=7)


def _load_dataset(args):
    if args.synthetic:
        shape = TensorShape(*_parse_ints(args.synthetic_shape))
        return make_synthetic_dataset(args.dataset_seed, args.synthetic_n,
                                      shape, args.classes)
    data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise ContractViolationError(
            f"no dataset: pass --synthetic, --data-dir, or set ${DATA_DIR_ENV}"
        )
    return load_mnist_dataset(data_dir, split=args.split)


def _attack_spec(args):
    if args.attack == "evoba":
        return EvobaConfig(query_budget=args.queries,
                           l0_threshold=args.l0_threshold,
                           pixel_batch_size=args.pixel_batch,
                           generation_size=args.gen_size,
                           seed=args.seed)
    if args.attack == "simba":
        return SimbaConfig(query_budget=args.queries,
                           step_size=args.eps_step, seed=args.seed)
    return CompleteRandomConfig(query_budget=args.queries,
                                l0_budget=args.l0_threshold, seed=args.seed)


def cmd_train(args):
    ds = _load_dataset(args)
    n_eval = max(1, len(ds) // 5)
    eval_ds = ds.subset(range(len(ds) - n_eval, len(ds)))
    train_ds = ds.subset(range(len(ds) - n_eval))
    if not args.synthetic:
        # MNIST ships a separate test split; train on the full train file
        train_ds, eval_ds = ds, load_mnist_dataset(
            args.data_dir or os.environ.get(DATA_DIR_ENV), split="test")
    arch = _parse_ints(args.arch)
    model = train_sgd(train_ds, arch, epochs=args.epochs, lr=args.lr,
                      seed=args.seed, eval_dataset=eval_ds,
                      batch_size=args.batch_size)
    model.save(args.weights_out)
    print(json.dumps({
        "weights": str(args.weights_out),
        "arch": model.arch,
        "train_accuracy": model.meta.get("train_accuracy"),
        "test_accuracy": model.meta.get("test_accuracy"),
    }))
    return 0


def cmd_attack(args):
    model = MlpModel.load(args.weights)
    ds = _load_dataset(args)
    pool = sample_eval_pool(ds, ClassifierOracle(model), args.pool_size,
                            seed=args.seed)
    spec = _attack_spec(args)
    if args.dump_dir:
        Path(args.dump_dir).mkdir(parents=True, exist_ok=True)
    report = camp.run_campaign(pool, model, spec, seed=args.seed,
                               dump_dir=args.dump_dir)
    camp.emit_report(report, "json", args.out, include_timing=args.timing)
    if args.csv_out:
        camp.emit_report(report, "csv", args.csv_out, include_timing=args.timing)
    print(json.dumps({"out": str(args.out), **report.summary_dict()}))
    return 0


def _geometric_budgets(max_budget, points=24):
    budgets = sorted({
        max(1, int(round(max_budget ** (i / (points - 1)))))
        for i in range(points)
    })
    return budgets


def cmd_report(args):
    with open(args.infile) as f:
        report = camp.CampaignReport.from_dict(json.load(f))
    if args.budgets:
        budgets = _parse_ints(args.budgets)
    else:
        max_q = max((r.queries for r in report.rows), default=1)
        budgets = _geometric_budgets(max_q)
    curve = camp.budget_curve(report, budgets)
    analysis = {
        "attack": report.attack,
        "summary": report.summary_dict(),
        "budget_curve": {"budgets": list(curve.budgets),
                         "success_rates": list(curve.success_rates)},
        "histograms": {},
    }
    queries = [r.queries for r in report.rows]
    analysis["histograms"]["queries"] = _hist_dict(queries, args.bins)
    succ = [r for r in report.rows if r.success]
    if succ:
        analysis["histograms"]["l0"] = _hist_dict([r.l0 for r in succ], args.bins)
        analysis["histograms"]["l2"] = _hist_dict([r.l2 for r in succ], args.bins)
    with open(args.out, "w") as f:
        json.dump(analysis, f, indent=2)
        f.write("\n")
    print(json.dumps({"out": str(args.out), "budgets": len(budgets)}))
    return 0


def _hist_dict(values, bins):
    h = camp.histogram(values, bins)
    return {"edges": list(h.edges), "counts": list(h.counts)}


def cmd_consistency(args):
    model = MlpModel.load(args.weights)
    ds = _load_dataset(args)
    pool = sample_eval_pool(ds, ClassifierOracle(model), args.pool_size,
                            seed=args.seed)
    spec = _attack_spec(args)
    study = camp.consistency_study(pool, model, spec, n_seeds=args.n_seeds,
                                   base_seed=args.seed)
    with open(args.out, "w") as f:
        json.dump(study.to_dict(), f, indent=2)
        f.write("\n")
    print(json.dumps({"out": str(args.out), "stats": study.stats}))
    return 0


def _add_attack_args(p):
    p.add_argument("--weights", required=True)
    p.add_argument("--attack", choices=["evoba", "simba", "random"],
                   default="evoba")
    p.add_argument("--queries", type=int, default=5000,
                   help="per-image query budget")
    p.add_argument("--l0-threshold", type=int, default=100,
                   help="EvoBA L0 threshold / CompleteRandom L0 budget")
    p.add_argument("--pixel-batch", type=int, default=1,
                   help="EvoBA grid positions mutated per generation")
    p.add_argument("--gen-size", type=int, default=10,
                   help="EvoBA children per generation")
    p.add_argument("--eps-step", type=float, default=0.2,
                   help="SimBA per-coordinate step size")
    p.add_argument("--pool-size", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="evoba",
        description="Black-box adversarial robustness harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the built-in MLP target")
    _add_dataset_args(p)
    p.set_defaults(split="train")
    p.add_argument("--arch", default="784,128,10",
                   help="comma separated layer widths, input to output")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights-out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="run one attack campaign")
    _add_dataset_args(p)
    _add_attack_args(p)
    p.add_argument("--out", required=True, help="JSON report path")
    p.add_argument("--csv-out", default=None)
    p.add_argument("--dump-dir", default=None,
                   help="save successful perturbed images here")
    p.add_argument("--timing", action="store_true",
                   help="include wall time in emitted reports")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("report", help="budget curve and histograms from a report")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--budgets", default=None,
                   help="comma separated thresholds (default: geometric grid)")
    p.add_argument("--bins", type=int, default=20)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("consistency", help="repeat a campaign over many seeds")
    _add_dataset_args(p)
    _add_attack_args(p)
    p.add_argument("--n-seeds", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_consistency)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
