#!/usr/bin/env python3
import asyncio
import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import Any, Dict, List, Sequence

import numpy as np

from config import get_settings, setup_logging
from data_io import SPLIT_SEEDS, UNROLL_FRACTION, Dataset, SplitPlan, load_dataset, make_splits, standardize
from eigensolver import EigOptions
from errors import GdpaSdrError
from gershgorin import alignment_report, discs, gdpa_scaling, similarity_transform
from graph import is_balanced, laplacian_to_graph, sym_matrix
from graph_learning import ParamVariant
from sdr_classifier import GdpaOptions
from services import ExperimentService, RunReport, run_bench, summarize
from unroll import GradEstimator, NetworkConfig, finite_or_none, load_checkpoint, save_checkpoint
from utils import get_historical_records, save_csv, save_json, save_jsonl, save_records

logger = logging.getLogger(__name__)

DEMO_MATRIX = [[2.0, -2.0, -1.0], [-2.0, 5.0, -2.0], [-1.0, -2.0, 4.0]]
METHODS = ("gdpa", "glr", "unrolled")
SPLITS_NAME = "splits.json"


def network_config(args) -> NetworkConfig:
    """Hyperparameters from the command line"""
    gdpa = GdpaOptions(lp_tol=args.lp_tol, max_outer=args.max_outer, eig=EigOptions(tol=args.eig_tol))
    return NetworkConfig(
        P=getattr(args, "layers", 1),
        lr=getattr(args, "lr", 1e-2),
        epochs=getattr(args, "epochs", 20),
        grad_estimator=GradEstimator(getattr(args, "grad", "fd")),
        fd_step=getattr(args, "fd_step", 1e-3),
        seed=getattr(args, "train_seed", 0),
        soft_loss=not getattr(args, "hard_loss", False),
        inner_iters=getattr(args, "inner_iters", None),
        variant=ParamVariant(args.variant),
        zeta=args.zeta,
        eta=args.eta,
        gamma=args.gamma,
        mu=args.mu,
        alpha1=args.alpha1,
        alpha2=args.alpha2,
        sigma_d=args.sigma_d,
        knn_k=args.knn,
        workers=getattr(args, "probe_workers", 1),
        gdpa=gdpa,
    )


def read_dataset(args) -> Dataset:
    dataset = load_dataset(args.data, fmt=args.format, label_column=args.label_column, header=args.header)
    return replace(dataset, F=standardize(dataset.F))


def write_outputs(args, command: str, records: List[Dict[str, Any]]):
    """JSON-lines file always, CSV table on request"""
    settings = get_settings()
    path = save_records(settings.results_dir, command, records, timestamps=not args.no_timestamp)
    print(f"Results written to {path}")
    if args.csv:
        save_csv(args.csv, records)


def write_split_plan(command: str, plan: SplitPlan) -> str:
    """Split plan next to the result files so runs can be reproduced"""
    path = os.path.join(get_settings().results_dir, command, SPLITS_NAME)
    save_json(path, plan.to_dict())
    print(f"Split plan written to {path}")
    return path


def write_trace(path: str, reports: Sequence[RunReport]):
    rows = [dict(row, fold=r.fold, seed=r.seed, method=r.method) for r in reports for row in r.trace]
    save_jsonl(path, rows)
    print(f"Trace with {len(rows)} iterations written to {path}")


def print_reports(reports: Sequence[RunReport]):
    for r in reports:
        rate = f"{100 * r.error_rate:6.2f}%" if r.ok else "FAILED"
        print(f"fold {r.fold} seed {r.seed} {r.method:<12} {rate}")
    summary = summarize(reports)
    if summary['mean_error_rate'] is not None:
        print(f"mean error rate: {100 * summary['mean_error_rate']:.2f}% "
              f"(+- {100 * summary['std_error_rate']:.2f}) over {summary['runs'] - summary['failed']} runs")


def report_records(reports: Sequence[RunReport], args) -> List[Dict[str, Any]]:
    return [r.to_record(timestamps=not args.no_timestamp) for r in reports]


async def cmd_classify(args) -> int:
    """Run gdpa / glr / unrolled over K folds x split seeds"""
    dataset = read_dataset(args)
    config = network_config(args)
    unroll = UNROLL_FRACTION if args.method == "unrolled" else None
    plan = make_splits(dataset, args.folds, split_seeds=args.seeds, unroll_fraction=unroll)
    service = ExperimentService(persist=args.db, workers=args.workers)
    reports = await service.classify(dataset, plan, args.method, config)
    print_reports(reports)
    write_outputs(args, "classify", report_records(reports, args))
    write_split_plan("classify", plan)
    if args.trace:
        write_trace(args.trace, reports)
    return 0 if all(r.ok for r in reports) else 1


async def cmd_train(args) -> int:
    """Train an unrolled network on one fold/seed split and write a checkpoint"""
    dataset = read_dataset(args)
    config = network_config(args)
    plan = make_splits(dataset, args.folds, split_seeds=[args.seed], unroll_fraction=UNROLL_FRACTION)
    if not 0 <= args.fold < args.folds:
        raise ValueError(f"--fold must lie in [0, {args.folds}), got {args.fold}")
    split = plan.for_fold(args.fold)[0]
    service = ExperimentService(persist=args.db, workers=args.workers)
    training, report = service.train(dataset, split, config)

    checkpoint = args.checkpoint or os.path.join(get_settings().results_dir, "train", "checkpoint.json")
    save_checkpoint(checkpoint, training.layers, config, training.history)
    print(f"Checkpoint written to {checkpoint}")
    for depth, layer in enumerate(training.layers, start=1):
        print(f"layer {depth}: {layer.metric.n_trainable} metric entries, gamma={layer.gamma:.4g} "
              f"mu={layer.mu:.4g} alpha1={layer.alpha1:.4g} alpha2={layer.alpha2:.4g}")
    print_reports([report])

    records = report_records([report], args)
    # failed epochs (infinite loss) are written as null
    records[0]["history"] = [{"epoch": h.epoch, "loss": finite_or_none(h.hard_loss),
                              "soft_loss": finite_or_none(h.soft_loss)} for h in training.history]
    write_outputs(args, "train", records)
    write_split_plan("train", plan)
    return 0 if report.ok else 1


async def cmd_infer(args) -> int:
    """Fixed checkpoint parameters applied to every split"""
    layers, config = load_checkpoint(args.checkpoint)
    dataset = read_dataset(args)
    plan = make_splits(dataset, args.folds, split_seeds=args.seeds)
    service = ExperimentService(persist=args.db, workers=args.workers)
    reports = await service.classify(dataset, plan, "unrolled", config, layers=layers, command="infer")
    print_reports(reports)
    write_outputs(args, "infer", report_records(reports, args))
    write_split_plan("infer", plan)
    return 0 if all(r.ok for r in reports) else 1


def load_matrix(path: str) -> np.ndarray:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"matrix file not found: {path}")
    return sym_matrix(np.loadtxt(path, ndmin=2))


async def cmd_inspect(args) -> int:
    """Gershgorin discs before and after the GDPA transform"""
    M = np.array(DEMO_MATRIX) if args.demo else load_matrix(args.matrix)
    report = alignment_report(M)
    before = discs(M)
    v = np.linalg.eigh(M)[1][:, 0]
    transformed = similarity_transform(M, gdpa_scaling(v))
    balanced, _ = is_balanced(laplacian_to_graph(M))

    record = {
        "lambda_min": report.lambda_min,
        "centers": before.centers.tolist(),
        "radii": before.radii.tolist(),
        "gct_bound": report.gct_bound,
        "aligned_bound": report.aligned_bound,
        "left_ends": report.left_ends.tolist(),
        "spread": report.spread,
        "aligned": report.aligned,
        "balanced": balanced,
        "transformed": transformed.tolist(),
    }
    if args.json:
        print(json.dumps(record, indent=2, sort_keys=True))
    else:
        print(f"lambda_min:      {report.lambda_min:.4f}")
        print(f"centers:         {np.round(before.centers, 4).tolist()}")
        print(f"radii:           {np.round(before.radii, 4).tolist()}")
        print(f"GCT bound:       {report.gct_bound:.4f}")
        print(f"aligned bound:   {report.aligned_bound:.4f}")
        print(f"left-ends:       {np.round(report.left_ends, 4).tolist()}")
        print(f"aligned:         {report.aligned} (balanced graph: {balanced})")
        print("S M S^-1:")
        for row in transformed:
            print("  " + "  ".join(f"{x:8.4f}" for x in row))
    write_outputs(args, "inspect", [record])
    return 0


async def cmd_bench(args) -> int:
    config = network_config(args)
    trace = [] if args.trace else None
    rows, summary = run_bench(args.instances, n=args.n, m=args.m, separation=args.separation,
                              seed=args.seed, config=config, trace=trace)
    print(f"{'inst':>4} {'gdpa=oracle':>11} {'glr=oracle':>10} {'gdpa err':>9} {'glr err':>8} {'gdpa s':>8}")
    for r in rows:
        print(f"{r['instance']:>4} {str(r['gdpa_agrees']):>11} {str(r['glr_agrees']):>10} "
              f"{r['gdpa_error_rate']:>9.3f} {r['glr_error_rate']:>8.3f} {r['gdpa_time']:>8.3f}")
    print(f"agreement with oracle: gdpa {summary['gdpa_agreement']:.2f}, glr {summary['glr_agreement']:.2f}")
    if args.no_timestamp:
        for r in rows:
            for key in ('gdpa_time', 'glr_time', 'oracle_time'):
                r.pop(key)
    write_outputs(args, "bench", rows + [{"summary": summary}])
    if args.trace:
        save_jsonl(args.trace, trace)
        print(f"Trace with {len(trace)} iterations written to {args.trace}")
    return 0


def show_result_files(command: str, limit: int) -> int:
    """Past result files of one command, newest first"""
    files = get_historical_records(get_settings().results_dir, command, limit)
    if not files:
        print(f"No result files for {command}")
    for k, records in enumerate(files, start=1):
        rates = [r["error_rate"] for r in records if r.get("error_rate") is not None]
        stamp = records[0].get("timestamp", "-") if records else "-"
        mean = f"{100 * float(np.mean(rates)):.2f}%" if rates else "-"
        print(f"{k:>3} {stamp} {len(records)} records, mean error {mean}")
    return 0


async def cmd_history(args) -> int:
    if args.results:
        return show_result_files(args.results, args.limit)
    service = ExperimentService()
    for run in service.get_history(args.limit):
        rate = f"{100 * run['mean_error_rate']:.2f}%" if run['mean_error_rate'] is not None else "-"
        print(f"#{run['id']} {run['start_time']} {run['command']:<9} {run['method'] or '-':<12} "
              f"success={run['success']} reports={run['reports']} mean error {rate}")
    return 0


def add_output_args(p):
    p.add_argument("--debug", action="store_true", help="Enable debug logging")
    p.add_argument("--no-timestamp", action="store_true", help="Omit timestamps and wall times from results")
    p.add_argument("--csv", help="Also write a CSV table to this path")


def add_data_args(p):
    p.add_argument("--data", required=True, help="Dataset file (LibSVM or CSV)")
    p.add_argument("--format", choices=["libsvm", "csv"], help="Dataset format (default: from extension)")
    p.add_argument("--label-column", type=int, default=-1, help="CSV label column")
    p.add_argument("--header", action="store_true", help="CSV file has a header row")
    p.add_argument("--folds", type=int, default=5, help="Number of folds K (2-9)")
    p.add_argument("--db", action="store_true", help="Store results in the experiment database")
    p.add_argument("--workers", type=int, help="Worker threads (capped by GDPA_SDR_THREADS)")


def add_model_args(p):
    p.add_argument("--variant", choices=[v.value for v in ParamVariant], default=ParamVariant.Q_LLE.value,
                   help="Graph: metric only (q) or metric plus LLE (q+lle)")
    p.add_argument("--zeta", type=float, default=0.9, help="Metric sparsification factor")
    p.add_argument("--eta", type=float, default=0.01, help="LLE sparsity weight")
    p.add_argument("--sigma-d", type=float, help="Edge weight scale (default: median heuristic)")
    p.add_argument("--alpha1", type=float, default=1.0, help="Weight of the metric graph")
    p.add_argument("--alpha2", type=float, default=1.0, help="Weight of the LLE graph")
    p.add_argument("--gamma", type=float, default=1.0, help="Same-label LLE increase")
    p.add_argument("--mu", type=float, default=1.0, help="Different-label LLE decrease")
    p.add_argument("--knn", type=int, help="Keep only k-nearest-neighbour edges")
    p.add_argument("--lp-tol", type=float, default=1e-6, help="Relative objective change to stop GDPA")
    p.add_argument("--max-outer", type=int, default=1000, help="Maximum GDPA iterations")
    p.add_argument("--eig-tol", type=float, default=1e-4, help="Eigensolver tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="GDPA-linearized SDR graph classifier CLI")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    classify_parser = subparsers.add_parser("classify", help="Classify a dataset over fold/seed splits")
    add_data_args(classify_parser)
    add_model_args(classify_parser)
    add_output_args(classify_parser)
    classify_parser.add_argument("--method", choices=METHODS, default="gdpa", help="Classifier")
    classify_parser.add_argument("--seeds", type=int, nargs="+", default=list(SPLIT_SEEDS), help="Split seeds")
    classify_parser.add_argument("--layers", type=int, default=1, help="Layers of the unrolled method")
    classify_parser.add_argument("--epochs", type=int, default=20, help="SGD epochs of the unrolled method")
    classify_parser.add_argument("--lr", type=float, default=1e-2, help="SGD learning rate")
    classify_parser.add_argument("--grad", choices=[g.value for g in GradEstimator], default="fd",
                                 help="Gradient estimator")
    classify_parser.add_argument("--trace", help="Write per-iteration GDPA records (JSON lines) to this path")

    train_parser = subparsers.add_parser("train", help="Train an unrolled network")
    add_data_args(train_parser)
    add_model_args(train_parser)
    add_output_args(train_parser)
    train_parser.add_argument("--layers", type=int, default=1, help="Number of layers P")
    train_parser.add_argument("--epochs", type=int, default=20, help="SGD epochs")
    train_parser.add_argument("--lr", type=float, default=1e-2, help="SGD learning rate")
    train_parser.add_argument("--grad", choices=[g.value for g in GradEstimator], default="fd",
                              help="Gradient estimator")
    train_parser.add_argument("--fd-step", type=float, default=1e-3, help="Relative probe step")
    train_parser.add_argument("--train-seed", type=int, default=0, help="Seed of SPSA perturbations")
    train_parser.add_argument("--inner-iters", type=int, help="GDPA iterations per layer")
    train_parser.add_argument("--hard-loss", action="store_true", help="Probe the sign loss instead of scores")
    train_parser.add_argument("--probe-workers", type=int, default=1, help="Threads for gradient probes")
    train_parser.add_argument("--fold", type=int, default=0, help="Fold to train on")
    train_parser.add_argument("--seed", type=int, default=SPLIT_SEEDS[0], help="Split seed to train on")
    train_parser.add_argument("--checkpoint", help="Checkpoint path")

    infer_parser = subparsers.add_parser("infer", help="Classify with a trained checkpoint")
    add_data_args(infer_parser)
    add_output_args(infer_parser)
    infer_parser.add_argument("--checkpoint", required=True, help="Checkpoint written by train")
    infer_parser.add_argument("--seeds", type=int, nargs="+", default=list(SPLIT_SEEDS), help="Split seeds")

    inspect_parser = subparsers.add_parser("inspect", help="Gershgorin disc diagnostics of a matrix")
    source = inspect_parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--demo", choices=["fig1", "three-node"], help="Built-in three-node example matrix")
    source.add_argument("--matrix", help="Whitespace-separated symmetric matrix file")
    inspect_parser.add_argument("--json", action="store_true", help="Print JSON instead of text")
    add_output_args(inspect_parser)

    bench_parser = subparsers.add_parser("bench", help="Compare against the brute-force oracle")
    add_model_args(bench_parser)
    add_output_args(bench_parser)
    bench_parser.add_argument("--instances", type=int, default=10, help="Number of synthetic instances")
    bench_parser.add_argument("--n", type=int, default=10, help="Samples per instance")
    bench_parser.add_argument("--m", type=int, default=4, help="Labeled samples per instance")
    bench_parser.add_argument("--separation", type=float, default=6.0, help="Cluster distance in std units")
    bench_parser.add_argument("--seed", type=int, default=0, help="First instance seed")
    bench_parser.add_argument("--trace", help="Write per-iteration GDPA records (JSON lines) to this path")

    history_parser = subparsers.add_parser("history", help="List past experiment runs")
    history_parser.add_argument("--limit", type=int, default=10, help="Number of runs or files")
    history_parser.add_argument("--results", choices=["classify", "train", "infer", "bench"],
                                help="List past result files of a command instead of database runs")
    history_parser.add_argument("--debug", action="store_true", help="Enable debug logging")

    return parser


COMMANDS = {
    "classify": cmd_classify,
    "train": cmd_train,
    "infer": cmd_infer,
    "inspect": cmd_inspect,
    "bench": cmd_bench,
    "history": cmd_history,
}


def main(argv=None) -> int:
    """Main CLI function"""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 0

    try:
        setup_logging(get_settings(), verbose=args.debug)
        return asyncio.run(COMMANDS[args.command](args))
    except FileNotFoundError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (GdpaSdrError, ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
