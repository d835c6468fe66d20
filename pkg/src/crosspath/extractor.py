"""Mid-block crossing candidate mining from scene logs.

Seven geometric criteria are applied to every pedestrian track, in order:

1. detected in the ego's forward half-plane at some frame (closed half-plane);
2. observed on both the left and the right of the ego's heading axis;
3. actually moving (net displacement >= 1 m and mean speed >= 0.3 m/s);
4. track direction forms a 45..135 degree angle with the ego direction
   (net-displacement vectors, closed interval);
5. ego drives straight: accumulated |heading change| < 60 degrees;
6. minimum pedestrian-ego distance < 50 m (strict);
7. the pedestrian path comes within a slack radius of the ego's observed
   path extended by a constant-velocity projection (scene-average speed
   along the final heading) over a bounded horizon - the loosened
   trajectory-intersection test.

Headings are degrees counterclockwise from the +x axis. Criteria are pure
predicates; extraction is deterministic and order-stable, and the funnel
report counts survivors after each stage (monotone non-increasing).
"""

from dataclasses import dataclass, field

import numpy as np

from .dataschema import SceneFrame, SceneLog
from .errors import SchemaError

CRITERIA = ("front", "both_sides", "moving", "angle", "straight_ego",
            "distance", "intersecting")


@dataclass
class CriteriaConfig:
    angle_lo_deg: float = 45.0
    angle_hi_deg: float = 135.0
    ego_heading_limit_deg: float = 60.0
    max_distance_m: float = 50.0
    slack_radius_m: float = 3.0
    projection_horizon_s: float = 5.0

    def __post_init__(self):
        if not 0.0 < self.angle_lo_deg < self.angle_hi_deg <= 180.0:
            raise SchemaError("angle window must satisfy 0 < lo < hi <= 180")
        for name in ("ego_heading_limit_deg", "max_distance_m", "slack_radius_m",
                     "projection_horizon_s"):
            if getattr(self, name) <= 0:
                raise SchemaError(f"{name} must be positive")


@dataclass
class Track:
    """One pedestrian's observations, aligned with ego state at those frames."""

    track_id: str
    t: np.ndarray
    xy: np.ndarray       # [n, 2] global
    ego_xy: np.ndarray   # [n, 2] ego position at the same frames
    ego_heading: np.ndarray  # [n] degrees


@dataclass
class EgoPath:
    t: np.ndarray
    xy: np.ndarray
    heading: np.ndarray


@dataclass
class CandidateEvent:
    scene_id: str
    track_id: str
    frame_span: tuple  # (t_first, t_last)
    flags: dict
    trajectory_global: np.ndarray     # [n, 3] (t, x, y)
    trajectory_ego_relative: np.ndarray  # [n, 3] (t, x_rel, y_rel)


@dataclass
class FunnelReport:
    """Survivor counts after each criterion stage."""

    total_tracks: int = 0
    survivors: dict = field(default_factory=lambda: {name: 0 for name in CRITERIA})
    events: int = 0

    def merge(self, other):
        self.total_tracks += other.total_tracks
        for name in CRITERIA:
            self.survivors[name] += other.survivors[name]
        self.events += other.events
        return self

    def counts(self):
        return [self.total_tracks] + [self.survivors[name] for name in CRITERIA]


def _heading_vec(deg):
    rad = np.deg2rad(deg)
    return np.stack([np.cos(rad), np.sin(rad)], axis=-1)


def criterion_1_front(track):
    """Pedestrian appears in the ego's forward (closed) half-plane."""
    h = _heading_vec(track.ego_heading)
    rel = track.xy - track.ego_xy
    return bool(np.any(np.einsum("ij,ij->i", h, rel) >= 0.0))


def criterion_2_both_sides(track):
    """Track observed strictly left and strictly right of the ego axis."""
    h = _heading_vec(track.ego_heading)
    rel = track.xy - track.ego_xy
    cross = h[:, 0] * rel[:, 1] - h[:, 1] * rel[:, 0]
    return bool(np.any(cross > 0.0) and np.any(cross < 0.0))


def criterion_3_moving(track, min_displacement=1.0, min_speed=0.3):
    """Net displacement and mean speed thresholds filter waiting/idling."""
    if len(track.t) < 2:
        return False
    net = float(np.linalg.norm(track.xy[-1] - track.xy[0]))
    duration = float(track.t[-1] - track.t[0])
    if duration <= 0:
        return False
    path = float(np.sum(np.linalg.norm(np.diff(track.xy, axis=0), axis=1)))
    return net >= min_displacement and path / duration >= min_speed


def criterion_4_angle(track, config):
    """Angle between pedestrian and ego net-displacement vectors."""
    ped = track.xy[-1] - track.xy[0]
    ego = track.ego_xy[-1] - track.ego_xy[0]
    np_ped = np.linalg.norm(ped)
    np_ego = np.linalg.norm(ego)
    if np_ped < 1e-9 or np_ego < 1e-9:
        return False
    cosang = float(np.clip(np.dot(ped, ego) / (np_ped * np_ego), -1.0, 1.0))
    angle = np.degrees(np.arccos(cosang))
    return config.angle_lo_deg <= angle <= config.angle_hi_deg


def criterion_5_straight_ego(ego, config):
    """Accumulated |heading change| over the scene stays under the limit."""
    if len(ego.heading) < 2:
        return True
    diffs = np.diff(ego.heading)
    diffs = (diffs + 180.0) % 360.0 - 180.0
    return float(np.sum(np.abs(diffs))) < config.ego_heading_limit_deg


def criterion_6_distance(track, config):
    """Minimum pedestrian-ego distance strictly under the cutoff."""
    dist = np.linalg.norm(track.xy - track.ego_xy, axis=1)
    return bool(np.min(dist) < config.max_distance_m)


def _point_segment_distance(points, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return np.linalg.norm(points - a, axis=1)
    s = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + s[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def criterion_7_intersecting(track, ego, config):
    """Pedestrian path approaches the ego's observed-or-projected path.

    The projection extends from the final pose along the final heading at the
    scene-average ego speed for the configured horizon (the loosening for
    short scenes where the ego never reaches the crossing point).
    """
    path = [ego.xy]
    duration = float(ego.t[-1] - ego.t[0]) if len(ego.t) > 1 else 0.0
    if duration > 0:
        travelled = float(np.sum(np.linalg.norm(np.diff(ego.xy, axis=0), axis=1)))
        avg_speed = travelled / duration
        reach = avg_speed * config.projection_horizon_s
        if reach > 1e-9:
            tip = ego.xy[-1] + _heading_vec(ego.heading[-1]) * reach
            path.append(tip[None, :])
    polyline = np.concatenate(path, axis=0)
    best = np.inf
    for i in range(len(polyline) - 1):
        d = _point_segment_distance(track.xy, polyline[i], polyline[i + 1])
        best = min(best, float(np.min(d)))
    if len(polyline) == 1:
        best = float(np.min(np.linalg.norm(track.xy - polyline[0], axis=1)))
    return best < config.slack_radius_m


def scene_tracks(scene):
    """Pedestrian tracks with ego state aligned frame-by-frame."""
    ego_t = np.array([f.t for f in scene.frames])
    ego_xy = np.array([[f.ego_pose[0], f.ego_pose[1]] for f in scene.frames])
    ego_heading = np.array([f.ego_pose[2] for f in scene.frames])
    ego = EgoPath(ego_t, ego_xy, ego_heading)

    per_track = {}
    for idx, frame in enumerate(scene.frames):
        for obj in frame.tracked:
            if obj.get("class") != "pedestrian":
                continue
            per_track.setdefault(obj["track_id"], []).append((idx, obj["x"], obj["y"]))
    tracks = []
    for track_id in sorted(per_track):
        rows = per_track[track_id]
        frame_idx = np.array([r[0] for r in rows])
        xy = np.array([[r[1], r[2]] for r in rows])
        tracks.append(Track(
            track_id=track_id,
            t=ego_t[frame_idx],
            xy=xy,
            ego_xy=ego_xy[frame_idx],
            ego_heading=ego_heading[frame_idx],
        ))
    return tracks, ego


def evaluate_criteria(track, ego, config):
    """All seven predicates for one track (no short-circuiting)."""
    return {
        "front": bool(criterion_1_front(track)),
        "both_sides": bool(criterion_2_both_sides(track)),
        "moving": bool(criterion_3_moving(track)),
        "angle": bool(criterion_4_angle(track, config)),
        "straight_ego": bool(criterion_5_straight_ego(ego, config)),
        "distance": bool(criterion_6_distance(track, config)),
        "intersecting": bool(criterion_7_intersecting(track, ego, config)),
    }


def extract(scene, config=None):
    """Apply the criteria in order; returns (events, FunnelReport)."""
    if not isinstance(scene, SceneLog):
        raise SchemaError("extract expects a SceneLog")
    config = config or CriteriaConfig()
    scene.validate()
    tracks, ego = scene_tracks(scene)
    funnel = FunnelReport(total_tracks=len(tracks))
    events = []
    for track in tracks:
        flags = evaluate_criteria(track, ego, config)
        for name in CRITERIA:
            if not flags[name]:
                break
            funnel.survivors[name] += 1
        if all(flags.values()):
            rel = _ego_relative(track)
            events.append(CandidateEvent(
                scene_id=scene.id,
                track_id=track.track_id,
                frame_span=(float(track.t[0]), float(track.t[-1])),
                flags=flags,
                trajectory_global=np.column_stack([track.t, track.xy]),
                trajectory_ego_relative=np.column_stack([track.t, rel]),
            ))
    funnel.events = len(events)
    return events, funnel


def _ego_relative(track):
    """Rotate each observation into the ego frame (x forward, y left)."""
    rad = np.deg2rad(track.ego_heading)
    cos, sin = np.cos(rad), np.sin(rad)
    rel = track.xy - track.ego_xy
    fwd = cos * rel[:, 0] + sin * rel[:, 1]
    left = -sin * rel[:, 0] + cos * rel[:, 1]
    return np.column_stack([fwd, left])


def extract_scenes(scenes, config=None):
    """Extract from many scenes; merged funnel is associative."""
    all_events = []
    funnel = FunnelReport()
    for scene in scenes:
        events, f = extract(scene, config)
        all_events.extend(events)
        funnel.merge(f)
    return all_events, funnel


# -- bundled labeled suite ------------------------------------------------------------


def _ego_states(n_frames, speed, heading0=90.0, turn_rate=0.0, decel=0.0, rate=10.0):
    """Stepwise-integrated ego path: [n, 4] rows (t, x, y, heading_deg)."""
    dt = 1.0 / rate
    x = y = 0.0
    v = speed
    heading = heading0
    rows = []
    for k in range(n_frames):
        rows.append((k * dt, x, y, ((heading + 180.0) % 360.0) - 180.0))
        rad = np.deg2rad(heading)
        x += v * np.cos(rad) * dt
        y += v * np.sin(rad) * dt
        if callable(turn_rate):
            heading += turn_rate(k * dt) * dt
        else:
            heading += turn_rate * dt
        v = max(v - decel * dt, 0.0)
    return np.array(rows)


def _ped_line(x0, y0, vx, vy, t_from=0.0, pause=None):
    """Linear walker; `pause` = (t_start, t_end) freezes motion in between."""
    def fn(t):
        if t < t_from:
            return None
        tt = t - t_from
        if pause is not None:
            lo, hi = pause
            moving = min(tt, lo) + max(tt - hi, 0.0)
        else:
            moving = tt
        return (x0 + vx * moving, y0 + vy * moving)
    return fn


def _suite_scene(sid, ego, peds, vehicles=()):
    frames = []
    for t, ex, ey, eh in ego:
        tracked = []
        for track_id, fn in peds.items():
            pos = fn(t)
            if pos is not None:
                tracked.append({"track_id": track_id, "class": "pedestrian",
                                "x": float(pos[0]), "y": float(pos[1])})
        for track_id, fn in vehicles:
            pos = fn(t)
            if pos is not None:
                tracked.append({"track_id": track_id, "class": "vehicle",
                                "x": float(pos[0]), "y": float(pos[1])})
        frames.append(SceneFrame(t=float(t), ego_pose=(float(ex), float(ey), float(eh)),
                                 tracked=tracked))
    return SceneLog(id=sid, frames=frames, rate_hz=10.0)


def build_labeled_suite():
    """20 positive and 20 negative hand-constructed scenes with labels.

    The ego drives north (+y) from the origin unless stated; pedestrians
    cross its axis for positives. Every negative is built to fail a specific
    criterion (some also fail later ones, which does not affect the label).
    """
    scenes = []
    labels = {}

    def add(sid, ego, peds, label, vehicles=()):
        scenes.append(_suite_scene(sid, ego, peds, vehicles))
        labels[sid] = label

    # -- positives --------------------------------------------------------------
    add("pos_perp_ew", _ego_states(70, 10.0), {"p": _ped_line(6.0, 35.0, -1.4, 0.0)}, True)
    add("pos_perp_we", _ego_states(70, 10.0), {"p": _ped_line(-6.0, 40.0, 1.3, 0.0)}, True)
    add("pos_slow_ped", _ego_states(110, 8.0), {"p": _ped_line(4.5, 30.0, -0.9, 0.0)}, True)
    add("pos_fast_ped", _ego_states(70, 12.0), {"p": _ped_line(8.0, 45.0, -1.9, 0.0)}, True)
    add("pos_oblique_60", _ego_states(75, 10.0), {"p": _ped_line(6.0, 30.0, -1.3, 0.75)}, True)
    add("pos_oblique_120", _ego_states(75, 10.0), {"p": _ped_line(6.0, 42.0, -1.3, -0.75)}, True)
    add("pos_far_start", _ego_states(90, 9.0), {"p": _ped_line(10.0, 38.0, -1.6, 0.0)}, True)
    add("pos_late_cross", _ego_states(80, 10.0), {"p": _ped_line(6.0, 55.0, -1.5, 0.0)}, True)
    add("pos_near_cross", _ego_states(70, 7.0), {"p": _ped_line(5.0, 18.0, -1.2, 0.0)}, True)
    add("pos_slow_ego", _ego_states(80, 4.0), {"p": _ped_line(6.0, 22.0, -1.4, 0.0)}, True)
    add("pos_curve_left", _ego_states(70, 8.0, turn_rate=4.0),
        {"p": _ped_line(6.0, 28.0, -1.4, 0.0)}, True)
    add("pos_curve_right", _ego_states(70, 8.0, turn_rate=-4.5),
        {"p": _ped_line(-6.0, 30.0, 1.4, 0.0)}, True)
    add("pos_curve_slight", _ego_states(70, 8.0, turn_rate=2.0),
        {"p": _ped_line(6.0, 26.0, -1.3, 0.1)}, True)
    # ego brakes to a stop short of the crossing point; the 5 s projection
    # still reaches the pedestrian's path
    add("pos_projection", _ego_states(60, 8.0, decel=2.0),
        {"p": _ped_line(5.0, 17.0, -1.4, 0.0)}, True)
    add("pos_two_peds", _ego_states(75, 9.0),
        {"a": _ped_line(6.0, 32.0, -1.4, 0.0), "b": _ped_line(-6.0, 48.0, 1.2, 0.0)}, True)
    add("pos_pause_mid", _ego_states(110, 8.0),
        {"p": _ped_line(7.0, 30.0, -1.4, 0.0, pause=(4.0, 5.0))}, True)
    add("pos_oblique_50", _ego_states(75, 10.0), {"p": _ped_line(6.0, 30.0, -1.2, 0.95)}, True)
    add("pos_oblique_130", _ego_states(75, 10.0), {"p": _ped_line(6.0, 44.0, -1.2, -0.95)}, True)
    add("pos_dense_traffic", _ego_states(70, 11.0), {"p": _ped_line(7.0, 36.0, -1.5, 0.0)},
        True, vehicles=[("v1", _ped_line(-3.0, 120.0, 0.0, -12.0))])
    add("pos_short_scene", _ego_states(55, 10.0), {"p": _ped_line(4.0, 25.0, -1.6, 0.0)}, True)

    # -- negatives: criterion 1 (never in front) ---------------------------------
    add("neg_behind", _ego_states(60, 10.0), {"p": _ped_line(3.0, -15.0, -1.4, -1.2)}, False)
    add("neg_rear_cross", _ego_states(50, 12.0), {"p": _ped_line(8.0, -10.0, -1.4, 0.0)}, False)
    # criterion 2 (never on both sides)
    add("neg_stays_right", _ego_states(60, 10.0), {"p": _ped_line(9.0, 30.0, -1.3, 1.2)}, False)
    add("neg_stays_left", _ego_states(60, 10.0), {"p": _ped_line(-10.0, 30.0, 1.2, 1.0)}, False)
    add("neg_single_frame", _ego_states(60, 10.0),
        {"p": lambda t: (5.0, 30.0) if abs(t - 2.0) < 0.05 else None}, False)
    # criterion 3 (not moving)
    add("neg_stationary", _ego_states(60, 10.0), {"p": lambda t: (4.0, 30.0)}, False)
    add("neg_slow_drift", _ego_states(60, 10.0), {"p": _ped_line(0.2, 30.0, -0.1, 0.02)}, False)
    add("neg_jitter", _ego_states(60, 10.0),
        {"p": lambda t: (0.3 * np.sin(8.0 * t), 30.0 + 0.3 * np.cos(8.0 * t))}, False)
    # criterion 4 (angle outside the window)
    add("neg_shallow_same", _ego_states(60, 10.0), {"p": _ped_line(1.5, 10.0, -0.5, 1.5)}, False)
    add("neg_shallow_opposite", _ego_states(60, 10.0), {"p": _ped_line(-1.2, 60.0, 0.4, -1.5)}, False)
    add("neg_shallow_diag", _ego_states(60, 10.0), {"p": _ped_line(1.5, 20.0, -0.45, 1.5)}, False)
    # criterion 5 (turning ego)
    add("neg_turn_90", _ego_states(60, 8.0, turn_rate=15.0),
        {"p": _ped_line(6.0, 30.0, -1.4, 0.0)}, False)
    add("neg_turn_70", _ego_states(60, 8.0, turn_rate=11.7),
        {"p": _ped_line(6.0, 30.0, -1.4, 0.0)}, False)
    add("neg_s_curve", _ego_states(60, 8.0, turn_rate=lambda t: 16.0 if t < 3.0 else -16.0),
        {"p": _ped_line(6.0, 30.0, -1.4, 0.0)}, False)
    # criterion 6 (too far)
    add("neg_far_cross", _ego_states(60, 2.0), {"p": _ped_line(6.0, 90.0, -1.4, 0.0)}, False)
    add("neg_far_flyby", _ego_states(60, 1.5), {"p": _ped_line(45.0, 70.0, -1.5, 0.0)}, False)
    add("neg_circle_50", _ego_states(60, 0.0),
        {"p": lambda t: (50.001 * np.cos(0.04 * t + 1.45), 50.001 * np.sin(0.04 * t + 1.45))},
        False)
    # criterion 7 (paths never converge)
    add("neg_stopped_ego", _ego_states(60, 2.5, decel=1.2), {"p": _ped_line(5.0, 30.0, -1.4, 0.0)},
        False)
    add("neg_short_reach", _ego_states(60, 2.0), {"p": _ped_line(5.0, 35.0, -1.5, 0.0)}, False)
    add("neg_crawl_ego", _ego_states(55, 1.2), {"p": _ped_line(4.0, 30.0, -1.6, 0.0)}, False)

    return scenes, labels
