"""Domain types, context encoding and JSONL round trips."""

import itertools

import numpy as np
import pytest

from crosspath.dataschema import (
    ARRIVAL_RATES,
    LANE_WIDTHS,
    ROAD_TYPES,
    SPEED_LIMITS,
    TIMES_OF_DAY,
    WEATHERS,
    CrossingInstance,
    ScenarioContext,
    TrajectoryPoint,
    encode_context,
    read_instances,
    read_scenes,
    write_instances,
    write_scenes,
    SceneFrame,
    SceneLog,
)
from crosspath.errors import ParseError, SchemaError


def make_instance(iid="a", n=30, width_context=None, reverse=False):
    ctx = width_context or ScenarioContext(road_type="one_way", lane_width_m=2.5, n_lanes=2)
    width = ctx.road_width
    pts = []
    for k in range(n):
        y = width * k / (n - 1)
        pts.append(TrajectoryPoint(t=round(k * 0.1, 6), x=0.01 * k, y=y, o=5.0, d=20.0 + k))
    if reverse:
        pts = [TrajectoryPoint(p.t, p.x, width - p.y, p.o, p.d) for p in pts]
    return CrossingInstance(id=iid, points=pts, context=ctx)


# -- encode_context ---------------------------------------------------------------


def test_encode_minimum_levels_all_zero_numerics():
    vec = encode_context(ScenarioContext("one_way", 30, 2.5, "clear", "day", 530))
    assert vec.tolist()[:3] == [1.0, 0.0, 0.0]
    assert np.allclose(vec[3:], 0.0)
    assert len(vec) == 10


def test_encode_maximum_levels():
    vec = encode_context(ScenarioContext("two_way_median", 50, 3.0, "snow", "night", 1100))
    assert vec.tolist()[:3] == [0.0, 0.0, 1.0]
    assert np.allclose(vec[3:8], 1.0)
    assert np.allclose(vec[8:], 0.0)


def test_encode_mid_levels():
    vec = encode_context(ScenarioContext("two_way", 40, 2.75, "clear", "night", 750))
    assert vec[3] == pytest.approx(0.5)
    assert vec[4] == pytest.approx(0.5)
    assert vec[5] == pytest.approx((750 - 530) / 570, abs=1e-9)
    assert vec[5] == pytest.approx(0.3860, abs=1e-4)
    assert vec[6] == 0.0 and vec[7] == 1.0


def test_encode_injective_over_grid():
    seen = set()
    for road, sl, lw, w, tod, ar in itertools.product(
            ROAD_TYPES, SPEED_LIMITS, LANE_WIDTHS, WEATHERS, TIMES_OF_DAY, ARRIVAL_RATES):
        vec = tuple(encode_context(ScenarioContext(road, sl, lw, w, tod, ar)).tolist())
        assert vec not in seen
        seen.add(vec)
    assert len(seen) == 324


# -- instance files ------------------------------------------------------------------


def test_instance_round_trip_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    instances = []
    for i in range(100):
        ctx = ScenarioContext(
            road_type=ROAD_TYPES[rng.integers(3)],
            speed_limit_kmh=SPEED_LIMITS[rng.integers(3)],
            lane_width_m=LANE_WIDTHS[rng.integers(3)],
            weather=WEATHERS[rng.integers(2)],
            time_of_day=TIMES_OF_DAY[rng.integers(2)],
            arrival_rate_vph=ARRIVAL_RATES[rng.integers(3)],
            n_lanes=2,
        )
        inst = make_instance(f"i{i:03d}", n=int(rng.integers(25, 60)), width_context=ctx)
        for p in inst.points:
            p.x = float(rng.normal() * 0.3)
            p.o = float(rng.uniform(-179.9, 179.9))
            p.d = float(rng.uniform(0, 200))
        instances.append(inst)
    p1 = tmp_path / "a.jsonl"
    p2 = tmp_path / "b.jsonl"
    write_instances(p1, instances)
    again = read_instances(p1)
    write_instances(p2, again)
    assert p1.read_bytes() == p2.read_bytes()


def test_nonuniform_timestep_rejected(tmp_path):
    inst = make_instance()
    inst.points[3].t += 0.1  # 0.2 s gap
    path = tmp_path / "bad.jsonl"
    write_instances(path, [inst])
    with pytest.raises(SchemaError, match="non-uniform timestep"):
        read_instances(path)


def test_empty_file_reads_empty(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert read_instances(path) == []


def test_malformed_line_includes_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"schema":"crosspath/1"}\n{not json\n')
    with pytest.raises(ParseError) as err:
        read_instances(path)
    assert err.value.line == 2


def test_mirror_normalization(tmp_path):
    inst = make_instance(reverse=True)
    assert inst.points[0].y > inst.points[-1].y
    path = tmp_path / "rev.jsonl"
    write_instances(path, [inst])
    got = read_instances(path)[0]
    assert got.points[0].y == pytest.approx(0.0, abs=1e-9)
    assert got.points[-1].y >= got.context.road_width - 0.05


def test_too_few_points_rejected():
    inst = make_instance()
    inst.points = inst.points[:1]
    with pytest.raises(SchemaError, match="fewer than 2"):
        inst.validate()


def test_incomplete_crossing_rejected():
    inst = make_instance()
    inst.points = inst.points[:-5]
    with pytest.raises(SchemaError, match="road width"):
        inst.validate()


def test_scenario_levels_validation():
    ScenarioContext("two_way", 40, 2.75, "clear", "day", 750).validate_levels()
    with pytest.raises(SchemaError, match="speed_limit"):
        ScenarioContext("two_way", 45, 2.75, "clear", "day", 750).validate_levels()


# -- scene files ------------------------------------------------------------------------


def make_scene(sid="s0", n=20):
    frames = [
        SceneFrame(t=k * 0.1, ego_pose=(0.0, 2.0 * k, 0.0),
                   tracked=[{"track_id": "p1", "class": "pedestrian", "x": 5.0 - 0.5 * k, "y": 30.0}])
        for k in range(n)
    ]
    return SceneLog(id=sid, frames=frames, rate_hz=10.0)


def test_scene_round_trip(tmp_path):
    path = tmp_path / "scenes.jsonl"
    write_scenes(path, [make_scene()])
    got = read_scenes(path)
    assert len(got) == 1
    assert got[0].frames[3].tracked[0]["track_id"] == "p1"


def test_scene_nonincreasing_time_rejected(tmp_path):
    scene = make_scene()
    scene.frames[5] = SceneFrame(t=scene.frames[4].t, ego_pose=(0, 0, 0), tracked=[])
    with pytest.raises(SchemaError, match="strictly increasing"):
        scene.validate()
