"""Canonical domain types and file formats shared by all modules.

Coordinate frame convention (fixed at ingest): y runs across the road,
starting at 0 on the departure curb and increasing in the direction of
travel (recordings made in the opposite direction are mirrored); x runs
along the road axis, centered on the crossing point; head orientation o is
in degrees relative to the crossing direction, wrapped to [-180, 180); d is
the distance in meters to the nearest vehicle, saturating at the recording
cap, with 999.0 as the "no vehicle in the scenario" sentinel.

Files are JSONL: a header line {"schema": "crosspath/1"} followed by one
record per line, UTF-8, field names exactly as in the type definitions.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import SCHEMA_VERSION
from .errors import ParseError, SchemaError

NO_VEHICLE = 999.0
STEP_SECONDS = 0.1
MEDIAN_WIDTH_M = 1.2
CONTEXT_LENGTH = 10

ROAD_TYPES = ("one_way", "two_way", "two_way_median")
SPEED_LIMITS = (30, 40, 50)
LANE_WIDTHS = (2.5, 2.75, 3.0)
WEATHERS = ("clear", "snow")
TIMES_OF_DAY = ("day", "night")
ARRIVAL_RATES = (530, 750, 1100)


@dataclass
class TrajectoryPoint:
    """One recorded crossing step at 10 Hz."""

    t: float  # seconds since crossing start
    x: float  # meters along the road axis
    y: float  # meters across the road, 0 = departure curb
    o: float  # head orientation, degrees in [-180, 180)
    d: float  # distance to nearest vehicle, meters (999.0 = no vehicle)


@dataclass
class ScenarioContext:
    """The six contextual variables of a crossing scenario."""

    road_type: str = "two_way"
    speed_limit_kmh: float = 40
    lane_width_m: float = 2.75
    weather: str = "clear"
    time_of_day: str = "day"
    arrival_rate_vph: float = 750
    n_lanes: int = 2

    @property
    def road_width(self):
        width = self.n_lanes * self.lane_width_m
        if self.road_type == "two_way_median":
            width += MEDIAN_WIDTH_M
        return width

    def validate_levels(self):
        """Check membership in the enumerated scenario grid (synthetic data
        only; ingested records may carry free values)."""
        checks = [
            ("road_type", self.road_type, ROAD_TYPES),
            ("speed_limit_kmh", self.speed_limit_kmh, SPEED_LIMITS),
            ("lane_width_m", self.lane_width_m, LANE_WIDTHS),
            ("weather", self.weather, WEATHERS),
            ("time_of_day", self.time_of_day, TIMES_OF_DAY),
            ("arrival_rate_vph", self.arrival_rate_vph, ARRIVAL_RATES),
        ]
        for name, value, levels in checks:
            if value not in levels:
                raise SchemaError(f"{name}={value!r} outside the scenario grid", field=name)

    def to_dict(self):
        return {
            "road_type": self.road_type,
            "speed_limit_kmh": self.speed_limit_kmh,
            "lane_width_m": self.lane_width_m,
            "weather": self.weather,
            "time_of_day": self.time_of_day,
            "arrival_rate_vph": self.arrival_rate_vph,
            "n_lanes": self.n_lanes,
        }

    @classmethod
    def from_dict(cls, record):
        return cls(**record)


# fixed encoding layout: 3 road-type one-hots, 3 min-max scaled numerics,
# snow flag, night flag, 2 reserved zeros for format stability
CONTEXT_FEATURES = ("road_type", "speed_limit_kmh", "lane_width_m", "weather",
                    "time_of_day", "arrival_rate_vph")
CONTEXT_SLOTS = {
    "road_type": (0, 1, 2),
    "speed_limit_kmh": (3,),
    "lane_width_m": (4,),
    "arrival_rate_vph": (5,),
    "weather": (6,),
    "time_of_day": (7,),
}


def _scaled(value, lo, hi):
    return float(np.clip((value - lo) / (hi - lo), 0.0, 1.0))


def encode_context(context):
    """Encode a ScenarioContext into the fixed length-10 vector.

    One-hot road type, min-max scaled numerics over the enumerated level
    ranges (clipped for free ingest values), snow and night flags, two
    reserved zeros. Injective over the full scenario grid.
    """
    vec = np.zeros(CONTEXT_LENGTH)
    if context.road_type in ROAD_TYPES:
        vec[ROAD_TYPES.index(context.road_type)] = 1.0
    vec[3] = _scaled(context.speed_limit_kmh, SPEED_LIMITS[0], SPEED_LIMITS[-1])
    vec[4] = _scaled(context.lane_width_m, LANE_WIDTHS[0], LANE_WIDTHS[-1])
    vec[5] = _scaled(context.arrival_rate_vph, ARRIVAL_RATES[0], ARRIVAL_RATES[-1])
    vec[6] = 1.0 if context.weather == "snow" else 0.0
    vec[7] = 1.0 if context.time_of_day == "night" else 0.0
    return vec


@dataclass
class CrossingInstance:
    """A full recorded crossing with its scenario context."""

    id: str
    points: list = field(default_factory=list)
    context: ScenarioContext = field(default_factory=ScenarioContext)

    def point_array(self):
        """Points as a float array with columns (t, x, y, o, d)."""
        return np.array([[p.t, p.x, p.y, p.o, p.d] for p in self.points])

    def validate(self):
        if len(self.points) < 2:
            raise SchemaError(f"instance {self.id}: fewer than 2 points", field="points")
        ts = np.array([p.t for p in self.points])
        if np.any(np.abs(np.diff(ts) - STEP_SECONDS) > 1e-6):
            raise SchemaError(f"instance {self.id}: non-uniform timestep", field="points.t")
        for p in self.points:
            if not -180.0 <= p.o < 180.0:
                raise SchemaError(f"instance {self.id}: o={p.o} outside [-180, 180)", field="points.o")
            if p.d < 0:
                raise SchemaError(f"instance {self.id}: negative distance d={p.d}", field="points.d")
        if abs(self.points[0].y) > 0.05:
            raise SchemaError(f"instance {self.id}: first point y={self.points[0].y:.3f} != 0",
                              field="points.y")
        width = self.context.road_width
        if self.points[-1].y < width - 0.05:
            raise SchemaError(
                f"instance {self.id}: last point y={self.points[-1].y:.3f} < road width {width:.2f}",
                field="points.y",
            )

    def to_dict(self):
        return {
            "id": self.id,
            "context": self.context.to_dict(),
            "points": [{"t": p.t, "x": p.x, "y": p.y, "o": p.o, "d": p.d} for p in self.points],
        }

    @classmethod
    def from_dict(cls, record):
        points = [TrajectoryPoint(**p) for p in record["points"]]
        return cls(id=record["id"], points=points, context=ScenarioContext.from_dict(record["context"]))


def mirror_if_reversed(instance):
    """Canonicalize crossing direction so y starts at 0 and increases."""
    pts = instance.points
    if len(pts) >= 2 and pts[-1].y < pts[0].y:
        y0 = pts[0].y
        instance.points = [TrajectoryPoint(p.t, p.x, y0 - p.y, p.o, p.d) for p in pts]
    return instance


@dataclass
class SceneFrame:
    t: float
    ego_pose: tuple  # (x, y, heading degrees)
    tracked: list  # of dicts {track_id, class, x, y}


@dataclass
class SceneLog:
    """Frame-indexed ego pose plus tracked object poses."""

    id: str
    frames: list
    rate_hz: float = 10.0

    def validate(self):
        ts = np.array([f.t for f in self.frames])
        if len(ts) and np.any(np.diff(ts) <= 0):
            raise SchemaError(f"scene {self.id}: timestamps not strictly increasing", field="frames.t")
        for f in self.frames:
            if not -180.0 <= f.ego_pose[2] < 180.0:
                raise SchemaError(f"scene {self.id}: ego heading outside [-180, 180)",
                                  field="frames.ego_pose.heading")

    def to_dict(self):
        return {
            "id": self.id,
            "rate_hz": self.rate_hz,
            "frames": [
                {
                    "t": f.t,
                    "ego_pose": {"x": f.ego_pose[0], "y": f.ego_pose[1], "heading": f.ego_pose[2]},
                    "tracked": f.tracked,
                }
                for f in self.frames
            ],
        }

    @classmethod
    def from_dict(cls, record):
        frames = [
            SceneFrame(
                t=f["t"],
                ego_pose=(f["ego_pose"]["x"], f["ego_pose"]["y"], f["ego_pose"]["heading"]),
                tracked=f["tracked"],
            )
            for f in record["frames"]
        ]
        return cls(id=record["id"], frames=frames, rate_hz=record.get("rate_hz", 10.0))


# -- JSONL I/O -------------------------------------------------------------------


def _write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fp:
        fp.write(json.dumps({"schema": SCHEMA_VERSION}, separators=(",", ":")) + "\n")
        for record in records:
            fp.write(json.dumps(record, separators=(",", ":")) + "\n")


def _read_jsonl(path):
    """Yield (line_number, record) pairs, checking the schema header."""
    out = []
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: malformed JSON ({exc.msg})", line=lineno) from exc
            if lineno == 1 and isinstance(record, dict) and "schema" in record and "id" not in record:
                if record["schema"] != SCHEMA_VERSION:
                    raise SchemaError(f"{path}: unsupported schema {record['schema']!r}", field="schema")
                continue
            out.append((lineno, record))
    return out


def write_instances(path, instances):
    _write_jsonl(path, (inst.to_dict() for inst in instances))


def read_instances(path, validate=True):
    """Read crossing instances, mirroring reversed recordings at ingest."""
    instances = []
    for lineno, record in _read_jsonl(path):
        try:
            inst = CrossingInstance.from_dict(record)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"{path}:{lineno}: bad instance record ({exc})", line=lineno) from exc
        mirror_if_reversed(inst)
        if validate:
            try:
                inst.validate()
            except SchemaError as exc:
                exc.line = lineno
                raise
        instances.append(inst)
    return instances


def write_scenes(path, scenes):
    _write_jsonl(path, (scene.to_dict() for scene in scenes))


def read_scenes(path, validate=True):
    scenes = []
    for lineno, record in _read_jsonl(path):
        try:
            scene = SceneLog.from_dict(record)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"{path}:{lineno}: bad scene record ({exc})", line=lineno) from exc
        if validate:
            try:
                scene.validate()
            except SchemaError as exc:
                exc.line = lineno
                raise
        scenes.append(scene)
    return scenes
