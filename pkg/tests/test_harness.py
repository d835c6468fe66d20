"""Grid search mechanics, CV protocol, final-eval guard and determinism."""

import numpy as np
import pytest

from crosspath.errors import ProtocolError
from crosspath.harness import (
    ComparisonRow,
    GridSpace,
    compare_aux_vanilla,
    cross_validate,
    final_eval,
    grid_search,
    prepare_samples,
    write_history_csv,
    write_leaderboard_csv,
    write_report_json,
)
from crosspath.model import ModelConfig
from crosspath.windowing import WindowingSpec, fit_normalization, make_splits
from tests.test_dataschema import make_instance


def tiny_corpus(n=24, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        inst = make_instance(f"i{k:03d}", n=int(rng.integers(24, 40)))
        inst.context.speed_limit_kmh = (30, 40, 50)[k % 3]
        inst.context.weather = ("clear", "snow")[k % 2]
        out.append(inst)
    return out


def tiny_space(**overrides):
    defaults = dict(
        kinds=("aux",), batch_sizes=(32,), dropouts=(0.0,), nodes=(8,),
        lstm_layers=(1,), dense_layers=(1,), data_types=("T_1_1",),
        variants=("xyod",), epochs=2,
    )
    defaults.update(overrides)
    return GridSpace(**defaults)


def test_paper_grid_counts():
    space = GridSpace()
    aux = space.model_configs("aux", 4, 10, 10)
    vanilla = space.model_configs("vanilla", 4, 10, 10)
    assert len(aux) == 3 ** 5 == 243
    assert len(vanilla) == 3 ** 4 == 81
    assert all(c.context_length == 0 for c in vanilla)


def test_cross_validate_protocol():
    corpus = tiny_corpus()
    split = make_splits([i.id for i in corpus], seed=1, k=2)
    samples = prepare_samples(corpus, split, WindowingSpec(mode="time", t1_s=1.0, t2_s=1.0))
    config = ModelConfig(kind="aux", lstm_layers=1, dense_layers=1, nodes=8,
                         batch_size=32, epochs=2, input_features=4, output_steps=10)
    result = cross_validate(config, samples, split, seed=3, epochs=2)
    assert len(result.fold_val_loss) == 2
    assert len(result.histories) == 2
    # folds are disjoint and cover the pool
    assert set(split.folds[0]).isdisjoint(split.folds[1])
    again = cross_validate(config, samples, split, seed=3, epochs=2)
    assert result.fold_val_loss == again.fold_val_loss


def test_cross_validate_parallel_matches_serial():
    corpus = tiny_corpus()
    split = make_splits([i.id for i in corpus], seed=1, k=2)
    samples = prepare_samples(corpus, split, WindowingSpec(mode="time", t1_s=1.0, t2_s=1.0))
    config = ModelConfig(kind="vanilla", lstm_layers=1, dense_layers=0, nodes=8,
                         batch_size=32, epochs=2, input_features=4, output_steps=10)
    serial = cross_validate(config, samples, split, seed=5, epochs=2, jobs=1)
    parallel = cross_validate(config, samples, split, seed=5, epochs=2, jobs=2)
    assert serial.fold_val_loss == parallel.fold_val_loss


def test_grid_search_leaderboard():
    corpus = tiny_corpus()
    split = make_splits([i.id for i in corpus], seed=2, k=2)
    space = tiny_space(nodes=(4, 8), dropouts=(0.0, 0.2))
    report = grid_search(space, corpus, split, seed=4)
    assert len(report.results) == 4  # 2 x 2 grid
    losses = [r.mean_val_loss for r in report.results]
    assert losses == sorted(losses)
    assert report.best is report.results[0]
    assert report.test_rmse is None


def test_grid_search_singleton_equals_cross_validate():
    corpus = tiny_corpus()
    split = make_splits([i.id for i in corpus], seed=2, k=2)
    report = grid_search(tiny_space(), corpus, split, seed=4)
    assert len(report.results) == 1
    assert report.best.mean_val_loss == report.results[0].mean_val_loss


def test_final_eval_guard_and_result():
    corpus = tiny_corpus()
    split = make_splits([i.id for i in corpus], seed=2, k=2)
    report = grid_search(tiny_space(), corpus, split, seed=4)
    test_rmse, net = final_eval(report, corpus, split, seed=4)
    assert np.isfinite(test_rmse) and test_rmse >= 0
    assert report.test_rmse == test_rmse
    assert split.test_uses  # access recorded
    with pytest.raises(ProtocolError):
        final_eval(report, corpus, split, seed=4)


def test_normalization_fitted_on_pool_only():
    corpus = tiny_corpus()
    split = make_splits([i.id for i in corpus], seed=2, k=2)
    samples = prepare_samples(corpus, split, WindowingSpec(mode="time", t1_s=1.0, t2_s=1.0))
    by_id = {i.id: i for i in corpus}
    pool_only = fit_normalization([by_id[i] for i in split.pool_ids], "xyod")
    assert np.array_equal(samples.norm.mins, pool_only.mins)
    assert np.array_equal(samples.norm.maxs, pool_only.maxs)


def test_compare_aux_vanilla_smoke():
    corpus = tiny_corpus(n=26)
    split = make_splits([i.id for i in corpus], seed=3, k=2)
    rows, reports, nets = compare_aux_vanilla(tiny_space(), corpus, split, seed=6)
    assert len(rows) == 1
    row = rows[0]
    assert np.isfinite(row.improvement_pct)
    assert ("T_1_1", "aux") in reports and ("T_1_1", "vanilla") in reports
    assert reports[("T_1_1", "aux")].test_rmse == row.aux_test_rmse


def test_report_artifacts(tmp_path):
    corpus = tiny_corpus()
    split = make_splits([i.id for i in corpus], seed=2, k=2)
    report = grid_search(tiny_space(), corpus, split, seed=4)
    final_eval(report, corpus, split, seed=4)
    lb = tmp_path / "leaderboard.csv"
    rj = tmp_path / "report.json"
    hist = tmp_path / "history.csv"
    write_leaderboard_csv(report, lb)
    write_report_json(report, rj)
    write_history_csv(report.best.histories[0], hist)
    assert lb.read_text().splitlines()[0].startswith("rank,")
    assert '"test_rmse"' in rj.read_text()
    assert hist.read_text().splitlines()[0] == "epoch,train_loss,val_loss,train_rmse,val_rmse"


def test_comparison_row_improvement():
    row = ComparisonRow("T_1_1", aux_test_rmse=0.26, vanilla_test_rmse=0.28)
    assert row.improvement_pct == pytest.approx(100 * (0.28 - 0.26) / 0.28)
