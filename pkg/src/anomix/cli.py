"""Command-line surface: train, evaluate, score, synth, sweep.

Every command writes exactly one JSON manifest (config hash, dataset
fingerprint, seed, metrics, wall clock) into the output directory, which
defaults to $ANOMIX_OUT or the working directory. Apart from manifests
and wall-clock fields, all outputs are byte-deterministic for a fixed
seed. Errors exit nonzero with a machine-readable JSON record on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import data as D
from .artifact import (
    ModelArtifact,
    file_fingerprint,
    load_model,
    save_model,
    write_manifest,
)
from .data import Dataset, Role
from .errors import AnomixError, DatasetError, UnusableDatasetError
from .metrics import evaluate_scores
from .rng import child_seed, substream
from .scorer import score_batch
from .training import TrainConfig, train

_SWEEP_COLUMNS = ("contamination", "labeled_anomalies", "repeat", "seed", "status",
                  "auc_pr", "auc_roc")


def _out_dir(arg: str | None) -> Path:
    path = Path(arg or os.environ.get("ANOMIX_OUT") or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _add_train_knobs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batches-per-epoch", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--rep-dim", type=int, default=128, help="representation width H")
    p.add_argument("--k", type=int, default=2, help="sources per mixed sample")
    p.add_argument("--alpha", type=float, default=0.5, help="Beta/Dirichlet concentration")
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--temperature", type=float, default=2.0)
    p.add_argument("--weight-decay", type=float, default=1e-5)
    p.add_argument("--ablation", default="full",
                   choices=("full", "discrete_targets", "plain_regression",
                            "no_consistency", "no_regularizer"))
    p.add_argument("--last-epoch", action="store_true",
                   help="return last-epoch weights instead of the best validation snapshot")


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch_size,
        n_epoch=args.epochs,
        n_batch=args.batches_per_epoch,
        lr=args.lr,
        rep_dim=args.rep_dim,
        k=args.k,
        alpha=args.alpha,
        margin=args.margin,
        temperature=args.temperature,
        weight_decay=args.weight_decay,
        ablation=args.ablation,
        seed=seed,
        select_best=not args.last_epoch,
    )


def _subset(dataset: Dataset, indices: np.ndarray, role: Role) -> Dataset:
    return Dataset(
        dataset.X[indices],
        dataset.y[indices],
        np.full(len(indices), int(role)),
        list(dataset.feature_names),
    )


def cmd_train(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args.out)
    if args.labeled_anomalies <= 0:
        raise UnusableDatasetError("--labeled-anomalies must be positive: training needs anomaly examples")
    dataset = D.load_csv(args.data, args.label_col)
    split = D.split_dataset(dataset, rng=substream(args.seed, "split"))
    test_rows = split.indices(Role.TEST)
    test_path = out / "test_split.csv"
    D.write_csv(_subset(split, test_rows, Role.TEST), test_path, label_column=args.label_col)
    prepared = D.prepare_training(
        split,
        labeled_anomalies=args.labeled_anomalies,
        contamination=args.contamination,
        feature_fraction=args.feature_fraction,
        seed=args.seed,
    )
    config = _train_config(args, args.seed)
    progress = _print_progress if args.verbose else None
    params, history = train(prepared, config, progress=progress)

    artifact = ModelArtifact(
        params=params,
        norm_state=prepared.norm_state,
        train_config={**asdict(config), "labeled_anomalies": args.labeled_anomalies,
                      "contamination": args.contamination,
                      "feature_fraction": args.feature_fraction},
        seed=args.seed,
    )
    model_path = out / "model.json"
    save_model(artifact, model_path)
    history_path = out / "history.json"
    history_path.write_text(json.dumps(history.as_dicts(), indent=1), encoding="utf-8")

    last = history.records[-1] if history.records else None
    metrics = {
        "epochs_run": len(history),
        "final_loss_scoring": last.loss_scoring if last else None,
        "final_loss_feature": last.loss_feature if last else None,
        "final_val_auc_pr": last.val_auc_pr if last else None,
        "best_val_auc_pr": max((r.val_auc_pr for r in history.records
                                if r.val_auc_pr is not None), default=None),
    }
    write_manifest(
        out / "train_manifest.json",
        command="train",
        config=artifact.train_config,
        dataset_fingerprint=file_fingerprint(args.data),
        seed=args.seed,
        metrics=metrics,
        wall_clock_s=time.perf_counter() - started,
        outputs={"model": str(model_path), "history": str(history_path),
                 "test_split": str(test_path)},
    )
    print(f"model written to {model_path}")
    if metrics["best_val_auc_pr"] is not None:
        print(f"best validation AUC-PR: {metrics['best_val_auc_pr']:.4f}")
    return 0


def _print_progress(record) -> None:
    val = f" val_auc_pr={record.val_auc_pr:.4f}" if record.val_auc_pr is not None else ""
    feat = f" loss_feature={record.loss_feature:.4f}" if record.loss_feature is not None else ""
    print(f"epoch {record.epoch}: loss_scoring={record.loss_scoring:.4f}{feat} "
          f"w={record.weight:.3f}{val}", file=sys.stderr)


def _load_scorable(args, require_labels: bool):
    """(features, labels-or-None) for a model-consuming command."""
    artifact = load_model(args.model)
    if require_labels or args.label_col:
        if not args.label_col:
            raise DatasetError("this command needs --label-col to find the labels")
        dataset = D.load_csv(args.data, args.label_col)
        X, y = dataset.X, dataset.y
    else:
        X, _names = D.load_features(args.data)
        y = None
    if X.shape[1] != artifact.params.d_in:
        raise DatasetError(
            f"model expects {artifact.params.d_in} features, data has {X.shape[1]}"
        )
    if artifact.norm_state is not None:
        X = D.normalize_features(X, artifact.norm_state)
    return artifact, X, y


def cmd_evaluate(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args.out)
    artifact, X, y = _load_scorable(args, require_labels=True)
    report = evaluate_scores(score_batch(artifact.params, X), y)
    payload = {"auc_roc": report.auc_roc, "auc_pr": report.auc_pr,
               "n_pos": report.n_pos, "n_neg": report.n_neg}
    print(json.dumps(payload, indent=1))
    (out / "metrics.json").write_text(json.dumps(payload, indent=1), encoding="utf-8")
    write_manifest(
        out / "evaluate_manifest.json",
        command="evaluate",
        config={"model": str(args.model), "data": str(args.data), "label_col": args.label_col},
        dataset_fingerprint=file_fingerprint(args.data),
        seed=artifact.seed,
        metrics=payload,
        wall_clock_s=time.perf_counter() - started,
        outputs={"metrics": str(out / "metrics.json")},
    )
    return 0


def cmd_score(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args.out)
    artifact, X, _ = _load_scorable(args, require_labels=False)
    scores = score_batch(artifact.params, X)
    score_path = out / "scores.csv"
    with open(score_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_index", "score"])
        for i, s in enumerate(scores):
            writer.writerow([i, repr(float(s))])
    write_manifest(
        out / "score_manifest.json",
        command="score",
        config={"model": str(args.model), "data": str(args.data), "label_col": args.label_col},
        dataset_fingerprint=file_fingerprint(args.data),
        seed=artifact.seed,
        metrics={"rows_scored": int(len(scores))},
        wall_clock_s=time.perf_counter() - started,
        outputs={"scores": str(score_path)},
    )
    print(f"{len(scores)} scores written to {score_path}")
    return 0


def cmd_synth(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args.out)
    outputs = {}
    if args.kind == "toy":
        dataset = D.generate_toy(args.n, args.seed, args.anomaly_fraction)
        path = out / "toy.csv"
        D.write_csv(dataset, path)
        outputs["data"] = str(path)
    else:
        train_ds, test_ds = D.generate_case(args.kind, args.n, args.seed, args.anomaly_fraction)
        train_path = out / f"{args.kind}_train.csv"
        test_path = out / f"{args.kind}_test.csv"
        D.write_csv(train_ds, train_path)
        D.write_csv(test_ds, test_path)
        outputs = {"train": str(train_path), "test": str(test_path)}
    write_manifest(
        out / "synth_manifest.json",
        command="synth",
        config={"kind": args.kind, "n": args.n, "seed": args.seed,
                "anomaly_fraction": args.anomaly_fraction},
        dataset_fingerprint=None,
        seed=args.seed,
        metrics={},
        wall_clock_s=time.perf_counter() - started,
        outputs=outputs,
    )
    for label, path in outputs.items():
        print(f"{label}: {path}")
    return 0


def _sweep_cell(dataset: Dataset, level: float, budget: int, cell_seed: int,
                overrides: dict) -> dict:
    split = D.split_dataset(dataset, rng=substream(cell_seed, "split"))
    prepared = D.prepare_training(
        split,
        labeled_anomalies=budget,
        contamination=level,
        feature_fraction=overrides.get("feature_fraction", 0.05),
        seed=cell_seed,
    )
    config = TrainConfig(
        batch_size=overrides.get("batch_size", 32),
        n_epoch=overrides.get("epochs", 50),
        n_batch=overrides.get("batches_per_epoch", 20),
        lr=overrides.get("lr", 0.005),
        rep_dim=overrides.get("rep_dim", 128),
        k=overrides.get("k", 2),
        alpha=overrides.get("alpha", 0.5),
        margin=overrides.get("margin", 1.0),
        temperature=overrides.get("temperature", 2.0),
        weight_decay=overrides.get("weight_decay", 1e-5),
        ablation=overrides.get("ablation", "full"),
        seed=cell_seed,
        select_best=overrides.get("select_best", True),
    )
    if budget <= 0:
        raise UnusableDatasetError("labeled budget must be positive")
    params, _history = train(prepared, config)
    test_idx = prepared.indices(Role.TEST)
    report = evaluate_scores(score_batch(params, prepared.X[test_idx]), prepared.y[test_idx])
    return {"auc_pr": report.auc_pr, "auc_roc": report.auc_roc}


def cmd_sweep(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args.out)
    try:
        sweep_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read sweep config {args.config}: {exc}") from exc
    data_path = sweep_cfg["data"]
    label_col = sweep_cfg.get("label_col", "label")
    levels = sweep_cfg.get("contamination_levels", [0.02])
    budgets = sweep_cfg.get("labeled_budgets", [30])
    repeats = int(sweep_cfg.get("repeats", 1))
    master_seed = int(sweep_cfg.get("seed", 0))
    overrides = {k: v for k, v in sweep_cfg.items()
                 if k not in ("data", "label_col", "contamination_levels",
                              "labeled_budgets", "repeats", "seed")}
    dataset = D.load_csv(data_path, label_col)

    rows = []
    for level in levels:
        for budget in budgets:
            for rep in range(repeats):
                cell_seed = child_seed(master_seed, f"cell:{level}:{budget}:{rep}")
                row = {"contamination": level, "labeled_anomalies": budget,
                       "repeat": rep, "seed": cell_seed}
                try:
                    row.update(_sweep_cell(dataset, float(level), int(budget),
                                           cell_seed, overrides))
                    row["status"] = "ok"
                except AnomixError as exc:
                    row.update({"status": f"error: {exc}", "auc_pr": "", "auc_roc": ""})
                rows.append(row)

    results_path = out / "sweep_results.csv"
    with open(results_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=_SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    n_ok = sum(1 for r in rows if r["status"] == "ok")
    write_manifest(
        out / "sweep_manifest.json",
        command="sweep",
        config=sweep_cfg,
        dataset_fingerprint=file_fingerprint(data_path),
        seed=master_seed,
        metrics={"cells": len(rows), "cells_ok": n_ok},
        wall_clock_s=time.perf_counter() - started,
        outputs={"results": str(results_path)},
    )
    print(f"{len(rows)} sweep rows written to {results_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anomix",
        description="Semi-supervised anomaly scoring for tabular CSV data.",
        epilog="Output directory defaults to $ANOMIX_OUT, then the working directory.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="split, normalize, label, adjust contamination, train")
    p.add_argument("--data", required=True, help="CSV with a header row and a binary label column")
    p.add_argument("--label-col", required=True)
    p.add_argument("--labeled-anomalies", type=int, default=30)
    p.add_argument("--contamination", type=float, default=0.02,
                   help="target anomaly share of the unlabeled pool")
    p.add_argument("--feature-fraction", type=float, default=0.05,
                   help="feature share spliced when injecting anomalies")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--verbose", action="store_true")
    _add_train_knobs(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a labeled CSV and report AUC-ROC / AUC-PR")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("score", help="write scores.csv (row_index, score) in input order")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default=None,
                   help="drop this label column before scoring, if the file has one")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("synth", help="generate a synthetic dataset as CSV")
    p.add_argument("--kind", required=True, choices=("toy", "clustered", "scattered", "novel"))
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--anomaly-fraction", type=float, default=0.05)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser(
        "sweep",
        help="grid of contamination levels x labeled budgets x repeats",
        description="Sweep config is JSON: {data, label_col, contamination_levels, "
                    "labeled_budgets, repeats, seed, ...train overrides}. Results CSV "
                    "columns, in order: " + ", ".join(_SWEEP_COLUMNS) + ". Infeasible "
                    "cells are recorded in the status column, not fatal.",
    )
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AnomixError as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
