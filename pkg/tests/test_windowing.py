"""Windowing schemes against a brute-force enumerator, normalization
round trips, and split management."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosspath.dataschema import ScenarioContext
from crosspath.errors import ConfigError, DegenerateSplitError, SplitError, StateError
from crosspath.windowing import (
    DatasetSplit,
    NormalizationParams,
    SampleSet,
    WindowingSpec,
    build_sample_set,
    count_time_windows,
    fit_normalization,
    make_splits,
    select_features,
    split_distance_based,
    window_time_based,
)
from tests.test_dataschema import make_instance


def brute_force_time_windows(n, t1_s, t2_s, stride):
    """Independent oracle: enumerate every start index explicitly."""
    t1 = int(round(t1_s * 10))
    t2 = int(round(t2_s * 10))
    count = 0
    start = 0
    while start + t1 + t2 <= n:
        count += 1
        start += stride
    return count


def test_time_window_count_example():
    inst = make_instance(n=30)
    windows = window_time_based(inst, 1.0, 1.0, 1)
    assert len(windows) == 11  # 30 - 20 + 1


def test_time_window_boundary_single_sample():
    inst = make_instance(n=20)
    assert len(window_time_based(inst, 1.0, 1.0, 1)) == 1


def test_time_window_too_short_is_empty():
    inst = make_instance(n=19)
    assert window_time_based(inst, 1.0, 1.0, 1) == []


@given(n=st.integers(min_value=2, max_value=120),
       t1=st.integers(min_value=1, max_value=3),
       t2=st.integers(min_value=1, max_value=3),
       stride=st.integers(min_value=1, max_value=7))
@settings(max_examples=80, deadline=None)
def test_count_formula_matches_brute_force(n, t1, t2, stride):
    assert count_time_windows(n, t1, t2, stride) == brute_force_time_windows(n, t1, t2, stride)


def test_time_symmetry_t12_equals_t21():
    rng = np.random.default_rng(1)
    lengths = rng.integers(20, 90, size=40)
    c12 = sum(count_time_windows(n, 1, 2) for n in lengths)
    c21 = sum(count_time_windows(n, 2, 1) for n in lengths)
    assert c12 == c21


def test_windows_are_causal_and_aligned():
    inst = make_instance(n=40)
    arr = inst.point_array()
    for i, (win, target) in enumerate(window_time_based(inst, 1.0, 2.0, 1)):
        assert win.shape == (10, 5)
        assert target.shape == (20, 2)
        assert np.allclose(win[:, 0], arr[i:i + 10, 0])  # input times
        assert np.allclose(target, arr[i + 10:i + 30, 1:3])  # targets strictly after inputs


# -- distance-based ---------------------------------------------------------------------


def test_distance_split_threshold():
    ctx = ScenarioContext(road_type="one_way", lane_width_m=3.0, n_lanes=2)  # 6 m road
    inst = make_instance(n=51, width_context=ctx)
    win, target = split_distance_based(inst, 0.3)
    split = win.shape[0]
    arr = inst.point_array()
    assert arr[split, 2] >= 0.3 * 6.0
    assert arr[split - 1, 2] < 0.3 * 6.0
    assert win.shape[0] + target.shape[0] == 51


def test_distance_split_counts_constant_speed():
    # 6 m at 1.2 m/s: 50 steps of 0.12 m; y first reaches 3.0 at step 25
    ctx = ScenarioContext(road_type="one_way", lane_width_m=3.0, n_lanes=2)
    inst = make_instance(n=51, width_context=ctx)
    win, target = split_distance_based(inst, 0.5)
    assert win.shape[0] == 25
    assert target.shape[0] == 26


def test_distance_split_one_sample_per_instance_any_p():
    instances = [make_instance(f"i{k}", n=30 + 3 * k) for k in range(10)]
    for p in (0.3, 0.5, 0.7):
        spec = WindowingSpec(mode="distance", p=p)
        norm = fit_normalization(instances, "xyod")
        samples = build_sample_set(instances, spec, norm)
        assert len(samples) == len(instances)


def test_distance_split_degenerate():
    inst = make_instance(n=30)
    inst.points[0].y = inst.context.road_width  # split index 0
    with pytest.raises(DegenerateSplitError):
        split_distance_based(inst, 0.5)


# -- features ----------------------------------------------------------------------------


def test_select_features_variants():
    pts = np.array([[1.0, 1.0, 2.0, 15.0, 20.0]])
    assert select_features(pts, "xyod").shape == (1, 4)
    assert np.allclose(select_features(pts, "xyd"), [[1.0, 2.0, 20.0]])
    xyod = select_features(pts, "xyod")
    assert np.allclose(select_features(pts, "xy"), xyod[:, :2])


def test_variant_unknown():
    with pytest.raises(ConfigError):
        select_features(np.zeros((1, 5)), "abc")


# -- normalization ------------------------------------------------------------------------


def test_normalization_midpoint():
    norm = NormalizationParams(("x", "y"), np.array([0.0, 0.0]), np.array([6.0, 4.0]), True)
    out = norm.apply(np.array([[3.0, 2.0]]))
    assert np.allclose(out, 0.5)


def test_normalization_constant_feature():
    norm = NormalizationParams(("x", "y"), np.array([2.0, 0.0]), np.array([2.0, 1.0]), True)
    out = norm.apply(np.array([[2.0, 0.25]]))
    assert out[0, 0] == 0.5
    assert out[0, 1] == 0.25
    back = norm.invert(out)
    assert back[0, 0] == 2.0


def test_normalization_round_trip():
    rng = np.random.default_rng(3)
    norm = NormalizationParams(("x", "y", "o", "d"),
                               np.array([-2.0, 0.0, -180.0, 0.0]),
                               np.array([2.0, 7.0, 180.0, 200.0]), True)
    vals = np.column_stack([
        rng.uniform(-2, 2, 1000), rng.uniform(0, 7, 1000),
        rng.uniform(-180, 180, 1000), rng.uniform(0, 200, 1000),
    ])
    back = norm.invert(norm.apply(vals))
    assert np.max(np.abs(back - vals)) < 1e-12


def test_normalization_unfitted_raises():
    with pytest.raises(StateError):
        NormalizationParams().apply(np.zeros((1, 2)))


def test_fit_excludes_d_sentinel():
    instances = [make_instance(n=30)]
    for p in instances[0].points[:3]:
        p.d = 999.0
    norm = fit_normalization(instances, "xyod")
    assert norm.maxs[3] < 999.0
    normalized = norm.apply(instances[0].point_array()[:, [1, 2, 3, 4]])
    assert normalized.max() <= 1.0


# -- splits ----------------------------------------------------------------------------------


def test_make_splits_sizes():
    ids = [f"i{k:03d}" for k in range(100)]
    split = make_splits(ids, seed=5)
    assert len(split.test_ids) == 20
    assert len(split.folds) == 8
    assert all(len(f) == 10 for f in split.folds)


def test_make_splits_deterministic_and_partition():
    ids = [f"i{k:03d}" for k in range(57)]
    a = make_splits(ids, seed=9)
    b = make_splits(list(reversed(ids)), seed=9)
    assert a.test_ids == b.test_ids and a.folds == b.folds
    everything = list(a.test_ids)
    for fold in a.folds:
        everything.extend(fold)
    assert sorted(everything) == sorted(ids)
    assert len(set(everything)) == len(ids)


def test_make_splits_too_few():
    with pytest.raises(SplitError):
        make_splits(["a", "b"], seed=0)


def test_split_round_trip():
    split = make_splits([f"i{k}" for k in range(40)], seed=3)
    again = DatasetSplit.from_dict(split.to_dict())
    assert again.test_ids == split.test_ids
    assert again.folds == split.folds


# -- sample assembly ---------------------------------------------------------------------------


def build_corpus(n_instances=12, n_lo=25, n_hi=60, seed=0):
    rng = np.random.default_rng(seed)
    return [make_instance(f"i{k:03d}", n=int(rng.integers(n_lo, n_hi))) for k in range(n_instances)]


def test_sample_set_time_based_shapes_and_range():
    instances = build_corpus()
    spec = WindowingSpec(mode="time", t1_s=1.0, t2_s=2.0, variant="xyod")
    norm = fit_normalization(instances, "xyod")
    samples = build_sample_set(instances, spec, norm)
    expected = sum(count_time_windows(len(i.points), 1, 2) for i in instances)
    assert len(samples) == expected
    assert samples.inputs.shape[1:] == (10, 4)
    assert samples.targets.shape[1:] == (20, 2)
    assert samples.masks.all()
    assert samples.inputs.min() >= 0.0 and samples.inputs.max() <= 1.0
    assert samples.targets.min() >= 0.0 and samples.targets.max() <= 1.0
    # inverting normalized targets recovers the raw meters
    back = samples.norm.invert_xy(samples.targets)
    assert np.max(np.abs(back[samples.masks] - samples.targets_raw[samples.masks])) < 1e-9


def test_sample_set_distance_padding_and_masks():
    instances = build_corpus()
    spec = WindowingSpec(mode="distance", p=0.5, variant="xy")
    norm = fit_normalization(instances, "xy")
    samples = build_sample_set(instances, spec, norm)
    assert len(samples) == len(instances)
    lengths = samples.masks.sum(axis=1)
    assert lengths.max() == samples.targets.shape[1]
    assert np.all(samples.targets[~samples.masks] == 0.0)
    # masks are a prefix (remaining steps), padding strictly at the tail
    for row in samples.masks:
        k = int(row.sum())
        assert row[:k].all() and not row[k:].any()


def test_sample_set_round_trip(tmp_path):
    instances = build_corpus()
    spec = WindowingSpec(mode="time", t1_s=1.0, t2_s=1.0)
    norm = fit_normalization(instances, "xyod")
    samples = build_sample_set(instances, spec, norm)
    path = tmp_path / "samples.bin"
    samples.save(path)
    again = SampleSet.load(path)
    assert np.array_equal(again.inputs, samples.inputs)
    assert np.array_equal(again.targets_raw, samples.targets_raw)
    assert np.array_equal(again.masks, samples.masks)
    assert again.instance_ids == samples.instance_ids
    # identical bytes on rewrite
    path2 = tmp_path / "samples2.bin"
    again.save(path2)
    assert path.read_bytes() == path2.read_bytes()


def test_sample_rows_for_ids():
    instances = build_corpus()
    spec = WindowingSpec(mode="time", t1_s=1.0, t2_s=1.0)
    norm = fit_normalization(instances, "xyod")
    samples = build_sample_set(instances, spec, norm)
    rows = samples.rows_for(["i000", "i003"])
    assert set(samples.instance_ids[i] for i in rows) == {"i000", "i003"}
    sub = samples.subset(rows)
    assert len(sub) == len(rows)
