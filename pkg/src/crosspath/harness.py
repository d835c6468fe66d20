"""Experiment orchestration: grid search, k-fold cross-validation, final
test evaluation and aux-vs-vanilla comparison.

The protocol mirrors the evaluation design: instances are split 80/20 into a
train-val pool and a held-out test set; normalization is fitted on the pool
only; hyperparameter configurations are ranked by mean validation loss over
the pool folds; the selected configuration is retrained on the pool and
evaluated exactly once on the test set (re-evaluating through the same
report is a protocol error, and every test access is recorded on the split).

Configurations and folds are independent work units; they may run on a
thread pool and are merged by index, so parallel and serial runs produce
identical reports.
"""

import csv
import itertools
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ProtocolError, TrainingDivergedError
from .model import ModelConfig, build, evaluate, train_model
from .seeds import DOMAIN_INIT, DOMAIN_TRAIN, derive_seed
from .windowing import WindowingSpec, build_sample_set, fit_normalization

FULL_GRID = {
    "batch_sizes": (32, 64, 128),
    "dropouts": (0.0, 0.2, 0.5),
    "nodes": (10, 50, 100),
    "lstm_layers": (1, 2, 3),
    "dense_layers": (1, 2, 3),
}


@dataclass
class GridSpace:
    """Axes of the exhaustive search; defaults reproduce the full grid."""

    kinds: tuple = ("aux",)
    batch_sizes: tuple = FULL_GRID["batch_sizes"]
    dropouts: tuple = FULL_GRID["dropouts"]
    nodes: tuple = FULL_GRID["nodes"]
    lstm_layers: tuple = FULL_GRID["lstm_layers"]
    dense_layers: tuple = FULL_GRID["dense_layers"]
    data_types: tuple = ("T_1_1",)
    variants: tuple = ("xyod",)
    epochs: int = 100
    secondary_loss_weight: float = 0.2
    learning_rate: float = 1e-3

    def model_configs(self, kind, input_features, context_length, output_steps):
        """All hyperparameter combinations for one model kind, in fixed
        lexicographic order (vanilla has no dense axis and no context)."""
        dense_axis = self.dense_layers if kind == "aux" else (0,)
        combos = itertools.product(self.batch_sizes, self.dropouts, self.nodes,
                                   self.lstm_layers, dense_axis)
        configs = []
        for batch, dropout, nodes, n_lstm, n_dense in combos:
            configs.append(ModelConfig(
                kind=kind,
                lstm_layers=n_lstm,
                dense_layers=n_dense,
                nodes=nodes,
                dropout=dropout,
                batch_size=batch,
                epochs=self.epochs,
                secondary_loss_weight=self.secondary_loss_weight if kind == "aux" else 0.0,
                learning_rate=self.learning_rate,
                input_features=input_features,
                context_length=context_length if kind == "aux" else 0,
                output_steps=output_steps,
            ))
        return configs


@dataclass
class CVResult:
    """Aggregated cross-validation metrics for one configuration."""

    config: ModelConfig
    data_type: str
    variant: str
    n_params: int
    fold_val_loss: list
    fold_val_rmse: list
    fold_train_loss: list
    fold_train_rmse: list
    fold_best_epochs: list
    histories: list = field(default_factory=list, repr=False)

    @property
    def mean_val_loss(self):
        return float(np.mean(self.fold_val_loss))

    @property
    def std_val_loss(self):
        return float(np.std(self.fold_val_loss))

    @property
    def mean_val_rmse(self):
        return float(np.mean(self.fold_val_rmse))

    @property
    def mean_train_loss(self):
        return float(np.mean(self.fold_train_loss))

    @property
    def mean_train_rmse(self):
        return float(np.mean(self.fold_train_rmse))


@dataclass
class ExperimentReport:
    """Grid-search leaderboard plus the final test evaluation of the winner."""

    seed: int
    kind: str
    results: list  # CVResult, leaderboard order
    best: CVResult
    wall_clock_s: float
    epochs: int
    test_rmse: float = None
    test_loss: float = None
    final_history: object = None

    def leaderboard_rows(self):
        rows = []
        for rank, r in enumerate(self.results, start=1):
            c = r.config
            rows.append({
                "rank": rank, "data_type": r.data_type, "variant": r.variant,
                "kind": c.kind, "lstm_layers": c.lstm_layers, "dense_layers": c.dense_layers,
                "nodes": c.nodes, "dropout": c.dropout, "batch_size": c.batch_size,
                "params": r.n_params,
                "mean_val_loss": r.mean_val_loss, "std_val_loss": r.std_val_loss,
                "mean_val_rmse": r.mean_val_rmse,
                "mean_train_loss": r.mean_train_loss, "mean_train_rmse": r.mean_train_rmse,
            })
        return rows


def prepare_samples(corpus, split, wspec):
    """Window the corpus with normalization fitted on the pool only."""
    by_id = {inst.id: inst for inst in corpus}
    pool_instances = [by_id[i] for i in split.pool_ids]
    norm = fit_normalization(pool_instances, wspec.variant)
    return build_sample_set(corpus, wspec, norm)


def _train_one_fold(samples, split, fold_idx, config, seed, epochs):
    """One CV unit: train on pool minus fold, validate on the fold."""
    val_ids = set(split.folds[fold_idx])
    train_ids = [i for i in split.pool_ids if i not in val_ids]
    train_set = samples.subset(samples.rows_for(train_ids))
    val_set = samples.subset(samples.rows_for(val_ids))
    net = build(config, seed=derive_seed(seed, DOMAIN_INIT, fold_idx))
    try:
        history = train_model(net, train_set, val_set,
                              seed=derive_seed(seed, DOMAIN_TRAIN, fold_idx), epochs=epochs)
    except TrainingDivergedError as exc:
        raise TrainingDivergedError(f"fold {fold_idx}: {exc}", epoch=exc.epoch) from exc
    best = history.best_epoch - 1
    return {
        "val_loss": history.val_loss[best],
        "val_rmse": history.val_rmse[best],
        "train_loss": history.train_loss[best],
        "train_rmse": history.train_rmse[best],
        "best_epoch": history.best_epoch,
        "history": history,
    }


def cross_validate(config, samples, split, seed, epochs=None, jobs=1,
                   data_type=None, variant=None):
    """Train one model per fold; deterministic aggregate for a given seed."""
    k = len(split.folds)
    epochs = epochs if epochs is not None else config.epochs
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_train_one_fold, samples, split, i, config, seed, epochs)
                       for i in range(k)]
            fold_results = [f.result() for f in futures]
    else:
        fold_results = [_train_one_fold(samples, split, i, config, seed, epochs)
                        for i in range(k)]
    net = build(config, seed=0)
    return CVResult(
        config=config,
        data_type=data_type or samples.spec.label,
        variant=variant or samples.spec.variant,
        n_params=net.parameter_count(),
        fold_val_loss=[r["val_loss"] for r in fold_results],
        fold_val_rmse=[r["val_rmse"] for r in fold_results],
        fold_train_loss=[r["train_loss"] for r in fold_results],
        fold_train_rmse=[r["train_rmse"] for r in fold_results],
        fold_best_epochs=[r["best_epoch"] for r in fold_results],
        histories=[r["history"] for r in fold_results],
    )


def grid_search(space, corpus, split, seed, kind=None, jobs=1, sample_cache=None):
    """Exhaustive sweep over the space; emits the full leaderboard.

    Best = lowest mean validation loss; ties broken by fewer parameters,
    then by enumeration order of the grid.
    """
    t0 = time.time()
    kinds = (kind,) if kind else space.kinds
    cache = sample_cache if sample_cache is not None else {}
    results = []
    order = []
    for data_type in space.data_types:
        for variant in space.variants:
            key = (data_type, variant)
            if key not in cache:
                cache[key] = prepare_samples(corpus, split,
                                             WindowingSpec.from_label(data_type, variant=variant))
            samples = cache[key]
            in_features = samples.inputs.shape[2]
            out_steps = samples.targets.shape[1]
            for k in kinds:
                for config in space.model_configs(k, in_features, 10, out_steps):
                    order.append((data_type, variant, config, samples))
    for idx, (data_type, variant, config, samples) in enumerate(order):
        results.append(cross_validate(config, samples, split,
                                      derive_seed(seed, idx), epochs=space.epochs,
                                      jobs=jobs, data_type=data_type, variant=variant))
    ranked = sorted(range(len(results)),
                    key=lambda i: (results[i].mean_val_loss, results[i].n_params, i))
    leaderboard = [results[i] for i in ranked]
    return ExperimentReport(
        seed=seed,
        kind="+".join(kinds),
        results=leaderboard,
        best=leaderboard[0],
        wall_clock_s=time.time() - t0,
        epochs=space.epochs,
    )


def final_eval(report, corpus, split, seed, jobs=1, sample_cache=None):
    """Retrain the report's best config on the pool and evaluate once on test.

    The last fold serves as the validation set for best-epoch checkpointing
    (the training contract needs one); the test set is touched exactly once
    per report and the access is recorded on the split.
    """
    if report.test_rmse is not None:
        raise ProtocolError("final_eval already ran for this report")
    best = report.best
    cache = sample_cache if sample_cache is not None else {}
    key = (best.data_type, best.variant)
    if key not in cache:
        cache[key] = prepare_samples(corpus, split,
                                     WindowingSpec.from_label(best.data_type, variant=best.variant))
    samples = cache[key]
    val_ids = set(split.folds[-1])
    train_ids = [i for i in split.pool_ids if i not in val_ids]
    net = build(best.config, seed=derive_seed(seed, DOMAIN_INIT, 0xF1))
    report.final_history = train_model(
        net, samples.subset(samples.rows_for(train_ids)),
        samples.subset(samples.rows_for(val_ids)),
        seed=derive_seed(seed, DOMAIN_TRAIN, 0xF1), epochs=report.epochs)
    spec = samples.spec
    net.wspec = {"mode": spec.mode, "t1_s": spec.t1_s, "t2_s": spec.t2_s, "p": spec.p,
                 "variant": spec.variant, "stride_steps": spec.stride_steps}
    split.mark_test_use(f"final_eval:{report.kind}:{best.data_type}:{best.variant}")
    test_set = samples.subset(samples.rows_for(split.test_ids))
    test_loss, test_rmse = evaluate(net, test_set)
    report.test_loss = float(test_loss)
    report.test_rmse = float(test_rmse)
    return test_rmse, net


@dataclass
class ComparisonRow:
    data_type: str
    aux_test_rmse: float
    vanilla_test_rmse: float

    @property
    def improvement_pct(self):
        if self.vanilla_test_rmse == 0:
            return 0.0
        return 100.0 * (self.vanilla_test_rmse - self.aux_test_rmse) / self.vanilla_test_rmse


def compare_aux_vanilla(space, corpus, split, seed, jobs=1):
    """Search aux and vanilla on identical splits/seeds; report the relative
    test-RMSE improvement per data type. Returns (rows, reports, nets)."""
    rows = []
    reports = {}
    nets = {}
    for data_type in space.data_types:
        sub = GridSpace(**{**space.__dict__, "data_types": (data_type,)})
        cache = {}
        for kind in ("aux", "vanilla"):
            report = grid_search(sub, corpus, split, seed, kind=kind, jobs=jobs,
                                 sample_cache=cache)
            _, net = final_eval(report, corpus, split, seed, jobs=jobs, sample_cache=cache)
            reports[(data_type, kind)] = report
            nets[(data_type, kind)] = net
        rows.append(ComparisonRow(
            data_type=data_type,
            aux_test_rmse=reports[(data_type, "aux")].test_rmse,
            vanilla_test_rmse=reports[(data_type, "vanilla")].test_rmse,
        ))
    return rows, reports, nets


# -- report artifacts ------------------------------------------------------------


def write_leaderboard_csv(report, path):
    rows = report.leaderboard_rows()
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.DictWriter(fp, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def write_report_json(report, path):
    # wall-clock lives in the run manifest, not here: report artifacts are
    # byte-for-byte reproducible under a fixed seed
    best = report.best
    payload = {
        "seed": report.seed,
        "kind": report.kind,
        "epochs": report.epochs,
        "test_rmse": report.test_rmse,
        "test_loss": report.test_loss,
        "best": {
            "data_type": best.data_type,
            "variant": best.variant,
            "config": best.config.to_dict(),
            "params": best.n_params,
            "mean_val_loss": best.mean_val_loss,
            "std_val_loss": best.std_val_loss,
            "mean_val_rmse": best.mean_val_rmse,
            "mean_train_loss": best.mean_train_loss,
            "mean_train_rmse": best.mean_train_rmse,
            "fold_best_epochs": best.fold_best_epochs,
        },
        "leaderboard": report.leaderboard_rows(),
    }
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(payload, fp, indent=2, sort_keys=True)
        fp.write("\n")


def write_history_csv(history, path):
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp)
        writer.writerow(["epoch", "train_loss", "val_loss", "train_rmse", "val_rmse"])
        writer.writerows(history.rows())
