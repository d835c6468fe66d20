"""Command-line entry point wiring all modules.

Subcommands: generate | window | train | gridsearch | evaluate | compare |
extract | explain | report (plus `rerun` to replay a manifest). Config
precedence is defaults < --config JSON file < explicit flags; the fully
resolved config is echoed into the output directory's manifest so any run
can be reproduced exactly.

Exit codes: 0 success, 1 other tool errors, 2 usage, 3 missing input,
4 schema/parse errors.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .dataschema import read_instances, read_scenes, write_instances
from .errors import CrosspathError, ParseError, SchemaError
from .explain import explain_corpus
from .extractor import CriteriaConfig, build_labeled_suite, extract_scenes
from .harness import (
    GridSpace,
    compare_aux_vanilla,
    final_eval,
    grid_search,
    prepare_samples,
    write_history_csv,
    write_leaderboard_csv,
    write_report_json,
)
from .manifest import Stopwatch, load_manifest, write_manifest
from .model import ModelConfig, build, evaluate, load_model, predict, save_model, train_model
from .seeds import DOMAIN_GENERATE, DOMAIN_INIT, DOMAIN_SPLIT, DOMAIN_TRAIN, derive_seed
from .synthgen import (
    BehaviorCoefficients,
    GeneratorConfig,
    benchmark_config,
    corpus_checksum,
    generate,
)
from .windowing import WindowingSpec, make_splits

EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_SCHEMA = 4


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _require_file(path, what):
    if path is None:
        raise CrosspathError(f"missing required input: {what}")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _load_corpus(path):
    return read_instances(_require_file(path, "corpus file"))


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(payload, fp, indent=2, sort_keys=True)
        fp.write("\n")


# -- runners (resolved config dict in, artifacts out) ---------------------------


def run_generate(config, out_dir):
    _ensure_dir(out_dir)
    if config.get("benchmark"):
        # the canonical fixed corpus: master seed used directly
        gen = benchmark_config(config["seed"])
    else:
        coeffs = BehaviorCoefficients(**config.get("coefficients", {}))
        gen = GeneratorConfig(
            n_participants=config["participants"],
            scenarios_per_participant=config["scenarios_per_participant"],
            master_seed=derive_seed(config["seed"], DOMAIN_GENERATE),
            coefficients=coeffs,
            mixture=config.get("mixture"),
        )
    with Stopwatch() as clock:
        corpus = generate(gen)
        write_instances(os.path.join(out_dir, "corpus.jsonl"), corpus)
        checksum = corpus_checksum(corpus)
        with open(os.path.join(out_dir, "corpus.sha256"), "w", encoding="utf-8") as fp:
            fp.write(checksum + "\n")
    write_manifest(out_dir, "generate", config, config["seed"], [],
                   ["corpus.jsonl", "corpus.sha256"], clock.elapsed)
    return {"instances": len(corpus), "checksum": checksum}


def _wspec_from_config(config):
    if config.get("data_type"):
        return WindowingSpec.from_label(config["data_type"], variant=config["variant"],
                                        stride_steps=config.get("stride", 1))
    if config["mode"] == "time":
        return WindowingSpec(mode="time", t1_s=config["t1"], t2_s=config["t2"],
                             variant=config["variant"], stride_steps=config.get("stride", 1))
    return WindowingSpec(mode="distance", p=config["p"], variant=config["variant"])


def run_window(config, out_dir):
    _ensure_dir(out_dir)
    corpus = _load_corpus(config["data"])
    wspec = _wspec_from_config(config)
    with Stopwatch() as clock:
        split = make_splits([i.id for i in corpus],
                            derive_seed(config["seed"], DOMAIN_SPLIT), k=config.get("folds", 8))
        samples = prepare_samples(corpus, split, wspec)
        samples.save(os.path.join(out_dir, "samples.bin"))
        _write_json(os.path.join(out_dir, "split.json"), split.to_dict())
        _write_json(os.path.join(out_dir, "counts.json"), {
            "data_type": wspec.label,
            "variant": wspec.variant,
            "instances": len(corpus),
            "samples": len(samples),
        })
    write_manifest(out_dir, "window", config, config["seed"], [config["data"]],
                   ["samples.bin", "split.json", "counts.json"], clock.elapsed)
    return {"samples": len(samples)}


def run_train(config, out_dir):
    _ensure_dir(out_dir)
    corpus = _load_corpus(config["data"])
    wspec = _wspec_from_config(config)
    with Stopwatch() as clock:
        split = make_splits([i.id for i in corpus],
                            derive_seed(config["seed"], DOMAIN_SPLIT), k=config.get("folds", 8))
        samples = prepare_samples(corpus, split, wspec)
        model_config = ModelConfig(
            kind=config["kind"],
            lstm_layers=config["lstm_layers"],
            dense_layers=config["dense_layers"] if config["kind"] == "aux" else 0,
            nodes=config["nodes"],
            dropout=config["dropout"],
            batch_size=config["batch_size"],
            epochs=config["epochs"],
            secondary_loss_weight=config["lam"] if config["kind"] == "aux" else 0.0,
            learning_rate=config["learning_rate"],
            input_features=samples.inputs.shape[2],
            context_length=10 if config["kind"] == "aux" else 0,
            output_steps=samples.targets.shape[1],
        )
        val_ids = set(split.folds[-1])
        train_ids = [i for i in split.pool_ids if i not in val_ids]
        net = build(model_config, seed=derive_seed(config["seed"], DOMAIN_INIT))
        history = train_model(net, samples.subset(samples.rows_for(train_ids)),
                              samples.subset(samples.rows_for(val_ids)),
                              seed=derive_seed(config["seed"], DOMAIN_TRAIN))
        net.wspec = {"mode": wspec.mode, "t1_s": wspec.t1_s, "t2_s": wspec.t2_s,
                     "p": wspec.p, "variant": wspec.variant,
                     "stride_steps": wspec.stride_steps}
        save_model(net, os.path.join(out_dir, "model.bin"))
        write_history_csv(history, os.path.join(out_dir, "history.csv"))
        _write_json(os.path.join(out_dir, "split.json"), split.to_dict())
        best = history.best_epoch - 1
        _write_json(os.path.join(out_dir, "metrics.json"), {
            "best_epoch": history.best_epoch,
            "val_loss": history.val_loss[best],
            "val_rmse": history.val_rmse[best],
            "train_loss": history.train_loss[best],
            "train_rmse": history.train_rmse[best],
        })
    write_manifest(out_dir, "train", config, config["seed"], [config["data"]],
                   ["model.bin", "history.csv", "split.json", "metrics.json"], clock.elapsed)
    return {"best_epoch": history.best_epoch, "val_rmse": history.val_rmse[best]}


def _space_from_config(config):
    def tup(key, default):
        return tuple(config.get(key, default))

    return GridSpace(
        kinds=tup("kinds", ("aux",)),
        batch_sizes=tup("batch_sizes", (32, 64, 128)),
        dropouts=tup("dropouts", (0.0, 0.2, 0.5)),
        nodes=tup("nodes", (10, 50, 100)),
        lstm_layers=tup("lstm_layers", (1, 2, 3)),
        dense_layers=tup("dense_layers", (1, 2, 3)),
        data_types=tup("data_types", ("T_1_1",)),
        variants=tup("variants", ("xyod",)),
        epochs=config["epochs"],
        secondary_loss_weight=config.get("lam", 0.2),
        learning_rate=config.get("learning_rate", 1e-3),
    )


def run_gridsearch(config, out_dir):
    _ensure_dir(out_dir)
    corpus = _load_corpus(config["data"])
    space = _space_from_config(config)
    with Stopwatch() as clock:
        split = make_splits([i.id for i in corpus],
                            derive_seed(config["seed"], DOMAIN_SPLIT), k=config.get("folds", 8))
        report = grid_search(space, corpus, split, config["seed"], jobs=config.get("jobs", 1))
        artifacts = ["leaderboard.csv", "report.json"]
        if config.get("final", True):
            final_eval(report, corpus, split, config["seed"], jobs=config.get("jobs", 1))
        write_leaderboard_csv(report, os.path.join(out_dir, "leaderboard.csv"))
        hist_dir = _ensure_dir(os.path.join(out_dir, "histories"))
        for rank, result in enumerate(report.results, start=1):
            for fold, history in enumerate(result.histories):
                rel = os.path.join("histories", f"rank{rank:03d}_fold{fold}.csv")
                write_history_csv(history, os.path.join(out_dir, rel))
                artifacts.append(rel)
        write_report_json(report, os.path.join(out_dir, "report.json"))
    write_manifest(out_dir, "gridsearch", config, config["seed"], [config["data"]],
                   artifacts, clock.elapsed)
    return {"best_val_loss": report.best.mean_val_loss, "test_rmse": report.test_rmse}


def run_evaluate(config, out_dir):
    _ensure_dir(out_dir)
    net = load_model(_require_file(config["model"], "model artifact"))
    corpus = _load_corpus(config["data"])
    if net.wspec is None:
        raise SchemaError("model artifact carries no windowing spec")
    wspec = WindowingSpec(**net.wspec)
    with Stopwatch() as clock:
        from .windowing import build_sample_set

        samples = build_sample_set(corpus, wspec, net.norm)
        subset = config.get("subset", "all")
        if subset == "test":
            split = make_splits([i.id for i in corpus],
                                derive_seed(config["seed"], DOMAIN_SPLIT),
                                k=config.get("folds", 8))
            split.mark_test_use("evaluate")
            samples = samples.subset(samples.rows_for(split.test_ids))
        loss, rmse_m = evaluate(net, samples)
        _write_json(os.path.join(out_dir, "metrics.json"), {
            "subset": subset, "samples": len(samples),
            "loss": loss, "rmse_m": rmse_m,
        })
        artifacts = ["metrics.json"]
        if config.get("predictions"):
            preds = predict(net, samples)
            with open(os.path.join(out_dir, "predictions.jsonl"), "w",
                      encoding="utf-8") as fp:
                fp.write(json.dumps({"schema": "crosspath/1"}, separators=(",", ":")) + "\n")
                for iid, p in zip(samples.instance_ids, preds):
                    fp.write(json.dumps({"instance_id": iid, "xy": p.tolist()},
                                        separators=(",", ":")) + "\n")
            artifacts.append("predictions.jsonl")
    write_manifest(out_dir, "evaluate", config, config.get("seed", 0),
                   [config["model"], config["data"]], artifacts, clock.elapsed)
    return {"rmse_m": rmse_m}


def run_compare(config, out_dir):
    _ensure_dir(out_dir)
    corpus = _load_corpus(config["data"])
    space = _space_from_config(config)
    with Stopwatch() as clock:
        split = make_splits([i.id for i in corpus],
                            derive_seed(config["seed"], DOMAIN_SPLIT), k=config.get("folds", 8))
        rows, reports, nets = compare_aux_vanilla(space, corpus, split, config["seed"],
                                                  jobs=config.get("jobs", 1))
        with open(os.path.join(out_dir, "comparison.csv"), "w", newline="",
                  encoding="utf-8") as fp:
            writer = csv.writer(fp)
            writer.writerow(["data_type", "aux_test_rmse", "vanilla_test_rmse",
                             "improvement_pct"])
            for row in rows:
                writer.writerow([row.data_type, row.aux_test_rmse,
                                 row.vanilla_test_rmse, row.improvement_pct])
        artifacts = ["comparison.csv"]
        for (data_type, kind), report in reports.items():
            rel = f"report_{data_type}_{kind}.json"
            write_report_json(report, os.path.join(out_dir, rel))
            artifacts.append(rel)
        for (data_type, kind), net in nets.items():
            rel = f"model_{data_type}_{kind}.bin"
            save_model(net, os.path.join(out_dir, rel))
            artifacts.append(rel)
    write_manifest(out_dir, "compare", config, config["seed"], [config["data"]],
                   artifacts, clock.elapsed)
    return {"rows": [(r.data_type, r.improvement_pct) for r in rows]}


def run_extract(config, out_dir):
    _ensure_dir(out_dir)
    if config.get("bundled_suite"):
        scenes, _ = build_labeled_suite()
        inputs = []
    else:
        scenes = read_scenes(_require_file(config["scenes"], "scenes file"))
        inputs = [config["scenes"]]
    criteria = CriteriaConfig(**config.get("criteria", {}))
    with Stopwatch() as clock:
        events, funnel = extract_scenes(scenes, criteria)
        events_rel = config.get("events_name", "events.jsonl")
        with open(os.path.join(out_dir, events_rel), "w", encoding="utf-8") as fp:
            fp.write(json.dumps({"schema": "crosspath/1"}, separators=(",", ":")) + "\n")
            for event in events:
                fp.write(json.dumps({
                    "scene_id": event.scene_id,
                    "track_id": event.track_id,
                    "frame_span": list(event.frame_span),
                    "flags": event.flags,
                    "trajectory_global": event.trajectory_global.tolist(),
                    "trajectory_ego_relative": event.trajectory_ego_relative.tolist(),
                }, separators=(",", ":")) + "\n")
        funnel_rel = config.get("funnel_name", "funnel.csv")
        with open(os.path.join(out_dir, funnel_rel), "w", newline="", encoding="utf-8") as fp:
            writer = csv.writer(fp)
            writer.writerow(["stage", "survivors"])
            writer.writerow(["tracks", funnel.total_tracks])
            for name, count in zip(
                    ("front", "both_sides", "moving", "angle", "straight_ego",
                     "distance", "intersecting"),
                    funnel.counts()[1:]):
                writer.writerow([name, count])
    write_manifest(out_dir, "extract", config, config.get("seed", 0), inputs,
                   [events_rel, funnel_rel], clock.elapsed)
    return {"events": len(events), "tracks": funnel.total_tracks}


def run_explain(config, out_dir):
    _ensure_dir(out_dir)
    net = load_model(_require_file(config["model"], "model artifact"))
    corpus = _load_corpus(config["data"])
    background = _load_corpus(config["background"])
    if net.wspec is None:
        raise SchemaError("model artifact carries no windowing spec")
    wspec = WindowingSpec(**net.wspec)
    with Stopwatch() as clock:
        from .windowing import build_sample_set

        samples = build_sample_set(corpus, wspec, net.norm)
        ids = sorted(set(samples.instance_ids))
        limit = config.get("instances")
        if limit:
            ids = ids[:limit]
        explanations, summary = explain_corpus(
            net, samples, corpus, ids, background, config["seed"],
            background_size=config.get("background_size", 100),
            mode=config.get("mode", "variables"),
            window_limit=config.get("window_limit", 8),
        )
        csv_rel = config.get("csv_name", "shap.csv")
        with open(os.path.join(out_dir, csv_rel), "w", newline="", encoding="utf-8") as fp:
            writer = csv.DictWriter(fp, fieldnames=["instance_id", "feature",
                                                    "feature_value", "phi"])
            writer.writeheader()
            writer.writerows(summary)
        _write_json(os.path.join(out_dir, "explanations.json"), [
            {
                "instance_id": e.instance_id,
                "phi": dict(zip(e.feature_names, e.phi.tolist())),
                "v_full": e.v_full,
                "v_empty": e.v_empty,
            }
            for e in explanations
        ])
    write_manifest(out_dir, "explain", config, config["seed"],
                   [config["model"], config["data"], config["background"]],
                   [csv_rel, "explanations.json"], clock.elapsed)
    return {"instances": len(explanations)}


def run_report(config, out_dir):
    _ensure_dir(out_dir)
    corpus = _load_corpus(config["data"])
    with Stopwatch() as clock:
        from .windowing import build_sample_set, count_time_windows, fit_normalization

        lengths = [len(inst.points) for inst in corpus]
        distance_rows = []
        for label in ("D_3", "D_5", "D_7"):
            wspec = WindowingSpec.from_label(label, variant=config.get("variant", "xyod"))
            norm = fit_normalization(corpus, wspec.variant)
            samples = build_sample_set(corpus, wspec, norm)
            distance_rows.append((label, len(samples)))
        time_rows = []
        for label in ("T_1_1", "T_1_2", "T_2_1"):
            wspec = WindowingSpec.from_label(label)
            total = sum(count_time_windows(n, wspec.t1_s, wspec.t2_s) for n in lengths)
            time_rows.append((label, total))
        with open(os.path.join(out_dir, "counts.csv"), "w", newline="", encoding="utf-8") as fp:
            writer = csv.writer(fp)
            writer.writerow(["distance_type", "distance_samples", "time_type", "time_samples"])
            for (dlabel, dcount), (tlabel, tcount) in zip(distance_rows, time_rows):
                writer.writerow([dlabel, dcount, tlabel, tcount])
        artifacts = ["counts.csv"]

        if config.get("aux_model") and config.get("vanilla_model"):
            aux = load_model(_require_file(config["aux_model"], "aux model"))
            vanilla = load_model(_require_file(config["vanilla_model"], "vanilla model"))
            wspec = WindowingSpec(**aux.wspec)
            samples = build_sample_set(corpus, wspec, aux.norm)
            split = make_splits([i.id for i in corpus],
                                derive_seed(config["seed"], DOMAIN_SPLIT),
                                k=config.get("folds", 8))
            split.mark_test_use("report")
            test = samples.subset(samples.rows_for(split.test_ids))
            n = min(config.get("samples", 6), len(test))
            rows_set = test.subset(np.arange(n))
            aux_preds = predict(aux, rows_set)
            van_samples = build_sample_set(corpus, WindowingSpec(**vanilla.wspec), vanilla.norm)
            van_test = van_samples.subset(van_samples.rows_for(split.test_ids)).subset(np.arange(n))
            van_preds = predict(vanilla, van_test)
            traj_dir = _ensure_dir(os.path.join(out_dir, "trajectories"))
            for i in range(n):
                rel = os.path.join("trajectories", f"sample_{i:03d}.csv")
                mask = rows_set.masks[i]
                truth = rows_set.targets_raw[i][mask]
                with open(os.path.join(out_dir, rel), "w", newline="",
                          encoding="utf-8") as fp:
                    writer = csv.writer(fp)
                    writer.writerow(["t", "x_true", "y_true", "x_pred_vanilla",
                                     "y_pred_vanilla", "x_pred_aux", "y_pred_aux"])
                    for k in range(truth.shape[0]):
                        writer.writerow([
                            round(0.1 * (k + 1), 6),
                            truth[k, 0], truth[k, 1],
                            van_preds[i][k, 0], van_preds[i][k, 1],
                            aux_preds[i][k, 0], aux_preds[i][k, 1],
                        ])
                artifacts.append(rel)
    inputs = [config["data"]]
    for key in ("aux_model", "vanilla_model"):
        if config.get(key):
            inputs.append(config[key])
    write_manifest(out_dir, "report", config, config.get("seed", 0), inputs,
                   artifacts, clock.elapsed)
    return {"artifacts": len(artifacts)}


RUNNERS = {
    "generate": run_generate,
    "window": run_window,
    "train": run_train,
    "gridsearch": run_gridsearch,
    "evaluate": run_evaluate,
    "compare": run_compare,
    "extract": run_extract,
    "explain": run_explain,
    "report": run_report,
}


def rerun_from_manifest(manifest_path, out_dir):
    """Replay a recorded run into a fresh directory, byte-identically."""
    manifest = load_manifest(_require_file(manifest_path, "manifest"))
    runner = RUNNERS[manifest["subcommand"]]
    return runner(manifest["config"], out_dir)


# -- argparse wiring ----------------------------------------------------------------


def _resolve(defaults, args, keys):
    """defaults < --config file < explicit flags."""
    config = dict(defaults)
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fp:
            config.update(json.load(fp))
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return config


def _add_common(sub, out_required=True):
    sub.add_argument("--out", required=out_required, help="output directory")
    sub.add_argument("--config", help="JSON config file (flags override it)")
    sub.add_argument("--seed", type=int, default=None, help="master seed")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="crosspath",
        description="Context-aware pedestrian crossing trajectory prediction toolkit",
    )
    parser.add_argument("--version", action="version", version=f"crosspath {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("generate", help="generate a synthetic crossing corpus")
    _add_common(p)
    p.add_argument("--participants", type=int, default=None)
    p.add_argument("--scenarios-per-participant", type=int, default=None,
                   dest="scenarios_per_participant")
    p.add_argument("--benchmark", action="store_const", const=True, default=None,
                   help="emit the canonical fixed benchmark corpus for this seed")
    p.set_defaults(defaults={"seed": 7, "participants": 150, "scenarios_per_participant": 20,
                             "benchmark": False},
                   keys=("seed", "participants", "scenarios_per_participant", "benchmark"))

    p = subs.add_parser("window", help="window a corpus into model-ready samples")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("time", "distance"), default=None)
    p.add_argument("--t1", type=float, default=None)
    p.add_argument("--t2", type=float, default=None)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--variant", choices=("xy", "xyo", "xyd", "xyod"), default=None)
    p.add_argument("--stride", type=int, default=None)
    p.set_defaults(defaults={"seed": 7, "mode": "time", "t1": 1.0, "t2": 1.0, "p": 0.5,
                             "variant": "xyod", "stride": 1, "data_type": None},
                   keys=("seed", "data", "mode", "t1", "t2", "p", "variant", "stride"))

    p = subs.add_parser("train", help="train one model configuration")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--data-type", dest="data_type", default=None, help="e.g. T_1_2 or D_5")
    p.add_argument("--variant", choices=("xy", "xyo", "xyd", "xyod"), default=None)
    p.add_argument("--kind", choices=("aux", "vanilla"), default=None)
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--lstm-layers", type=int, default=None, dest="lstm_layers")
    p.add_argument("--dense-layers", type=int, default=None, dest="dense_layers")
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lam", type=float, default=None, help="secondary loss weight")
    p.set_defaults(defaults={"seed": 7, "data_type": "T_1_1", "mode": "time", "t1": 1.0,
                             "t2": 1.0, "p": 0.5, "variant": "xyod", "kind": "aux",
                             "nodes": 50, "lstm_layers": 1, "dense_layers": 1,
                             "batch_size": 128, "dropout": 0.0, "epochs": 100,
                             "lam": 0.2, "learning_rate": 1e-3, "folds": 8},
                   keys=("seed", "data", "data_type", "variant", "kind", "nodes",
                         "lstm_layers", "dense_layers", "batch_size", "dropout",
                         "epochs", "lam"))

    p = subs.add_parser("gridsearch", help="exhaustive grid search with cross-validation")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--no-final", action="store_true", help="skip the final test evaluation")
    p.set_defaults(defaults={"seed": 7, "epochs": 100, "folds": 8, "jobs": None,
                             "final": True},
                   keys=("seed", "data", "epochs", "folds", "jobs"))

    p = subs.add_parser("evaluate", help="evaluate a model artifact on a corpus")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--subset", choices=("all", "test"), default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--predictions", action="store_const", const=True, default=None,
                   help="also emit predictions.jsonl")
    p.set_defaults(defaults={"seed": 7, "subset": "all", "folds": 8, "predictions": False},
                   keys=("seed", "model", "data", "subset", "folds", "predictions"))

    p = subs.add_parser("compare", help="aux vs vanilla over data types")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(defaults={"seed": 7, "epochs": 15, "folds": 2, "jobs": None,
                             "data_types": ["T_1_1", "T_1_2", "T_2_1"],
                             "batch_sizes": [128], "dropouts": [0.0], "nodes": [50],
                             "lstm_layers": [1], "dense_layers": [1]},
                   keys=("seed", "data", "epochs", "folds", "jobs"))

    p = subs.add_parser("extract", help="mine mid-block crossing candidates from scene logs")
    _add_common(p)
    p.add_argument("--scenes", default=None)
    p.add_argument("--funnel", default=None, help="funnel CSV name (default funnel.csv)")
    p.add_argument("--bundled-suite", action="store_true", dest="bundled_suite",
                   help="run on the bundled labeled scene suite")
    p.set_defaults(defaults={"seed": 0, "scenes": None, "bundled_suite": False},
                   keys=("seed", "scenes"))

    p = subs.add_parser("explain", help="Shapley attribution of context features to error")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="instances to explain (JSONL)")
    p.add_argument("--background", required=True, help="background instances (JSONL)")
    p.add_argument("--instances", type=int, default=None, help="limit explained instances")
    p.add_argument("--background-size", type=int, default=None, dest="background_size")
    p.add_argument("--mode", choices=("variables", "encoded_dims"), default=None)
    p.set_defaults(defaults={"seed": 7, "instances": None, "background_size": 100,
                             "mode": "variables", "window_limit": 8},
                   keys=("seed", "model", "data", "background", "instances",
                         "background_size", "mode"))

    p = subs.add_parser("report", help="sample-count tables and trajectory exports")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--aux-model", dest="aux_model", default=None)
    p.add_argument("--vanilla-model", dest="vanilla_model", default=None)
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(defaults={"seed": 7, "aux_model": None, "vanilla_model": None,
                             "samples": 6, "folds": 8},
                   keys=("seed", "data", "aux_model", "vanilla_model", "samples"))

    p = subs.add_parser("rerun", help="replay a recorded manifest into a new directory")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    return parser


def _split_file_out(args, config, key, default_name, suffixes):
    """Allow --out to name the primary artifact file directly (spec CLI
    forms like `--out events.jsonl` / `--out shap.csv`)."""
    out = args.out
    if any(out.endswith(sfx) for sfx in suffixes):
        config[key] = os.path.basename(out)
        return os.path.dirname(out) or "."
    config.setdefault(key, default_name)
    return out


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            result = rerun_from_manifest(args.manifest, args.out)
        else:
            config = _resolve(args.defaults, args, args.keys)
            out_dir = args.out
            if args.command == "extract":
                if getattr(args, "bundled_suite", False):
                    config["bundled_suite"] = True
                if getattr(args, "funnel", None):
                    config["funnel_name"] = os.path.basename(args.funnel)
                out_dir = _split_file_out(args, config, "events_name",
                                          "events.jsonl", (".jsonl",))
            if args.command == "explain":
                out_dir = _split_file_out(args, config, "csv_name", "shap.csv", (".csv",))
            if args.command == "gridsearch" and getattr(args, "no_final", False):
                config["final"] = False
            jobs_env = os.environ.get("CROSSPATH_JOBS")
            if config.get("jobs") is None and jobs_env:
                config["jobs"] = int(jobs_env)
            if config.get("jobs") is None:
                config["jobs"] = 1
            result = RUNNERS[args.command](config, out_dir)
        print(json.dumps({"command": args.command, "ok": True, **(result or {})},
                         sort_keys=True, default=str))
        return 0
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ParseError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except CrosspathError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
