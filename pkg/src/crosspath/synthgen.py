"""Seeded synthetic crossing-scenario generator.

Stands in for an unavailable VR corpus: a kinematic pedestrian model whose
trajectory statistics depend on the six contextual variables, walking across
lanes fed by Poisson vehicle streams, sampled at 10 Hz.

Behavioral model (all coefficients configurable):

* forward speed = participant base speed (Normal, clipped) modulated by
  speed limit, weather, arrival rate, a speed-limit-dependent ramp over the
  crossing, and a proximity slowdown when a vehicle is near;
* lateral drift x(t) is an Ornstein-Uhlenbeck process (theta = 1/s) whose
  noise scale doubles at night and under snow;
* two_way_median roads insert a pause at the median with configured
  probability; snow and night independently insert a mid-crossing hesitation
  pause at a random position with configured probability (this is what makes
  snowy/night behaviour bimodal and hence less predictable);
* head orientation oscillates toward the approaching traffic with an
  amplitude that grows as the nearest vehicle closes in;
* d records the distance to the nearest vehicle, saturated at d_cap so it
  stays continuous when the nearest vehicle changes; 999.0 when the scenario
  has no traffic at all.

Instances are generated from per-instance seeds spawned off the master seed,
so parallel and serial generation produce the identical corpus.
"""

import hashlib
import itertools
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .dataschema import (
    ARRIVAL_RATES,
    LANE_WIDTHS,
    MEDIAN_WIDTH_M,
    NO_VEHICLE,
    ROAD_TYPES,
    SPEED_LIMITS,
    STEP_SECONDS,
    TIMES_OF_DAY,
    WEATHERS,
    CrossingInstance,
    ScenarioContext,
    TrajectoryPoint,
)
from .errors import ConfigError, GenerationError


@dataclass
class BehaviorCoefficients:
    """Effect sizes of the contextual variables on the kinematics."""

    base_speed_mean: float = 1.3      # m/s, Normal per participant
    base_speed_std: float = 0.15
    base_speed_clip: tuple = (0.6, 2.2)
    speed_limit_effect: dict = field(default_factory=lambda: {30: 0.0, 40: 0.05, 50: 0.10})
    speed_limit_ramp: dict = field(default_factory=lambda: {30: 0.0, 40: 0.05, 50: 0.10})
    snow_speed_effect: float = -0.05
    arrival_speed_effect: float = 0.04
    lateral_noise: float = 0.12       # OU sigma, m / sqrt(s)
    lateral_theta: float = 1.0        # OU mean reversion, 1/s
    night_noise_multiplier: float = 2.0
    snow_noise_multiplier: float = 2.0
    median_pause_prob: float = 0.85
    median_pause_range_s: tuple = (0.6, 1.8)
    snow_hesitation_prob: float = 0.35
    snow_hesitation_range_s: tuple = (0.8, 2.0)
    night_hesitation_prob: float = 0.25
    night_hesitation_range_s: tuple = (0.6, 1.6)
    proximity_slowdown_dist_m: float = 12.0
    proximity_slowdown_factor: float = 0.93
    heading_scan_period_s: float = 2.5
    heading_noise_deg: float = 2.0
    critical_gap_mean_s: float = 4.0
    critical_gap_std_s: float = 0.8


@dataclass
class GeneratorConfig:
    """Corpus layout, scenario mixture and behavioral coefficients."""

    n_participants: int = 150
    scenarios_per_participant: int = 20
    master_seed: int = 7
    coefficients: BehaviorCoefficients = field(default_factory=BehaviorCoefficients)
    mixture: dict = None  # optional {variable: {level: weight}}; None = stratified uniform
    d_cap: float = 200.0
    vehicle_speed_cv: float = 0.08
    stream_window_s: tuple = (-150.0, 120.0)
    max_duration_s: float = 60.0
    max_attempts: int = 25

    def __post_init__(self):
        c = self.coefficients
        if c.base_speed_mean <= 0:
            raise ConfigError("base speed mean must be positive")
        for name, p in (("median_pause_prob", c.median_pause_prob),
                        ("snow_hesitation_prob", c.snow_hesitation_prob),
                        ("night_hesitation_prob", c.night_hesitation_prob)):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")

    @property
    def n_instances(self):
        return self.n_participants * self.scenarios_per_participant


@dataclass
class LaneTraffic:
    """One lane's vehicles: times each passes x=0, speeds, direction, offset."""

    pass_times: np.ndarray
    speeds: np.ndarray
    direction: int  # +1 / -1 along the road axis
    y_center: float

    def positions(self, t):
        return self.direction * self.speeds * (t - self.pass_times)


@dataclass
class VehicleStream:
    lanes: list

    def nearest(self, t, px, py, cap):
        """(distance to nearest vehicle capped, side of approach in {-1, 0, +1})."""
        best = cap
        side = 0
        for lane in self.lanes:
            if len(lane.pass_times) == 0:
                continue
            xs = lane.positions(t)
            alive = np.abs(xs) < 400.0
            if not np.any(alive):
                continue
            dx = xs[alive] - px
            dy = lane.y_center - py
            dist = np.sqrt(dx * dx + dy * dy)
            idx = int(np.argmin(dist))
            if dist[idx] < best:
                best = float(dist[idx])
                side = int(np.sign(dx[idx])) or 1
        return best, side


def lane_geometry(context):
    """Lane y-centers and travel directions for a context's road layout."""
    w = context.lane_width_m
    if context.road_type == "two_way_median":
        centers = [0.5 * w, w + MEDIAN_WIDTH_M + 0.5 * w]
        directions = [1, -1]
    else:
        centers = [(k + 0.5) * w for k in range(context.n_lanes)]
        if context.road_type == "two_way":
            directions = [1 if k < context.n_lanes / 2 else -1 for k in range(context.n_lanes)]
        else:
            directions = [1] * context.n_lanes
    return centers, directions


def build_vehicle_stream(context, config, rng):
    """Poisson per-lane traffic over the configured scenario window."""
    centers, directions = lane_geometry(context)
    t_lo, t_hi = config.stream_window_s
    lane_rate = context.arrival_rate_vph / 3600.0 / max(len(centers), 1)
    v_mean = context.speed_limit_kmh / 3.6
    lanes = []
    for y_center, direction in zip(centers, directions):
        if lane_rate <= 0:
            lanes.append(LaneTraffic(np.zeros(0), np.zeros(0), direction, y_center))
            continue
        gaps = rng.exponential(1.0 / lane_rate, size=max(int((t_hi - t_lo) * lane_rate * 2) + 8, 8))
        times = t_lo + np.cumsum(gaps)
        times = times[times < t_hi]
        speeds = np.clip(rng.normal(v_mean, config.vehicle_speed_cv * v_mean, size=len(times)),
                         0.3 * v_mean, None)
        lanes.append(LaneTraffic(times, speeds, direction, y_center))
    return VehicleStream(lanes)


def _find_start(stream, critical_gap, rng):
    """First accepted gap in the nearest lane; None if the window has none."""
    if not stream.lanes or len(stream.lanes[0].pass_times) == 0:
        return 0.0
    times = stream.lanes[0].pass_times
    gaps = np.diff(times)
    ok = np.nonzero(gaps > critical_gap)[0]
    for idx in ok:
        start = times[idx] + 0.3
        if start >= 0.0:
            return float(start)
    return None


def _pause_schedule(context, width, coeffs, rng):
    """[(trigger_y, duration_s)] sorted by trigger position.

    Draws are made unconditionally to keep the per-instance random stream
    aligned across contexts that share a seed.
    """
    pauses = []
    u_median = rng.random()
    d_median = rng.uniform(*coeffs.median_pause_range_s)
    if context.road_type == "two_way_median" and u_median < coeffs.median_pause_prob:
        pauses.append((context.lane_width_m + 0.5 * MEDIAN_WIDTH_M, d_median))
    u_snow = rng.random()
    y_snow = rng.uniform(0.15, 0.85) * width
    d_snow = rng.uniform(*coeffs.snow_hesitation_range_s)
    if context.weather == "snow" and u_snow < coeffs.snow_hesitation_prob:
        pauses.append((y_snow, d_snow))
    u_night = rng.random()
    y_night = rng.uniform(0.15, 0.85) * width
    d_night = rng.uniform(*coeffs.night_hesitation_range_s)
    if context.time_of_day == "night" and u_night < coeffs.night_hesitation_prob:
        pauses.append((y_night, d_night))
    return sorted(pauses)


def simulate_crossing(context, base_speed, critical_gap, rng, config, instance_id):
    """Simulate one crossing; returns a CrossingInstance."""
    coeffs = config.coefficients
    width = context.road_width
    arr_scaled = np.clip(
        (context.arrival_rate_vph - ARRIVAL_RATES[0]) / (ARRIVAL_RATES[-1] - ARRIVAL_RATES[0]),
        0.0, 1.0)
    speed_mult = (1.0 + coeffs.speed_limit_effect.get(context.speed_limit_kmh, 0.0))
    if context.weather == "snow":
        speed_mult *= 1.0 + coeffs.snow_speed_effect
    speed_mult *= 1.0 + coeffs.arrival_speed_effect * arr_scaled
    ramp = coeffs.speed_limit_ramp.get(context.speed_limit_kmh, 0.0)

    noise = coeffs.lateral_noise
    if context.time_of_day == "night":
        noise *= coeffs.night_noise_multiplier
    if context.weather == "snow":
        noise *= coeffs.snow_noise_multiplier

    for _ in range(config.max_attempts):
        stream = build_vehicle_stream(context, config, rng)
        t0 = _find_start(stream, critical_gap, rng)
        if t0 is None:
            continue
        pauses = _pause_schedule(context, width, coeffs, rng)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        max_steps = int(config.max_duration_s / STEP_SECONDS)

        has_traffic = any(len(lane.pass_times) for lane in stream.lanes)
        dt = STEP_SECONDS
        sqrt_dt = np.sqrt(dt)
        y = 0.0
        ou = 0.0
        pause_left = 0.0
        pause_queue = list(pauses)
        points = []

        def observe(k):
            t = t0 + k * dt
            if has_traffic:
                d, side = stream.nearest(t, ou, y, config.d_cap)
            else:
                d, side = NO_VEHICLE, 1
            amp = 15.0 + 35.0 * np.exp(-min(d, config.d_cap) / 20.0)
            o = side * amp * np.sin(2.0 * np.pi * (k * dt) / coeffs.heading_scan_period_s + phase)
            o += coeffs.heading_noise_deg * rng.normal()
            o = (o + 180.0) % 360.0 - 180.0
            return TrajectoryPoint(t=round(k * dt, 6), x=ou, y=y, o=o, d=d), d

        point, d_now = observe(0)
        points.append(point)
        k = 0
        while y < width - 1e-9:
            k += 1
            if k > max_steps:
                break
            if pause_queue and pause_left <= 0.0 and y >= pause_queue[0][0]:
                pause_left = pause_queue.pop(0)[1]
            if pause_left > 0.0:
                vy = 0.0
                pause_left -= dt
            else:
                vy = base_speed * speed_mult * (1.0 + ramp * (y / width))
                if d_now < coeffs.proximity_slowdown_dist_m:
                    vy *= coeffs.proximity_slowdown_factor
            y = min(y + vy * dt, width + 0.25 * dt * base_speed)
            ou += coeffs.lateral_theta * (0.0 - ou) * dt + noise * sqrt_dt * rng.normal()
            point, d_now = observe(k)
            points.append(point)
        if y >= width - 1e-9:
            return CrossingInstance(id=instance_id, points=points, context=context)
    raise GenerationError(
        f"could not complete a crossing for {instance_id} after {config.max_attempts} attempts")


def _scenario_grid():
    combos = []
    for road, limit, lane, weather, tod, rate in itertools.product(
            ROAD_TYPES, SPEED_LIMITS, LANE_WIDTHS, WEATHERS, TIMES_OF_DAY, ARRIVAL_RATES):
        combos.append(ScenarioContext(
            road_type=road, speed_limit_kmh=limit, lane_width_m=lane, weather=weather,
            time_of_day=tod, arrival_rate_vph=rate, n_lanes=2))
    return combos


def sample_contexts(config, rng):
    """Scenario contexts for the whole corpus.

    Default: stratified over the full 324-combination grid (level frequencies
    exact up to the remainder), shuffled. With mixture weights: independent
    draws per variable.
    """
    total = config.n_instances
    if config.mixture is None:
        grid = _scenario_grid()
        reps = total // len(grid)
        contexts = grid * reps
        remainder = total - len(contexts)
        if remainder:
            extra = rng.choice(len(grid), size=remainder, replace=False)
            contexts = contexts + [grid[i] for i in extra]
        order = rng.permutation(total)
        return [replace(contexts[i]) for i in order]

    defaults = {
        "road_type": ROAD_TYPES, "speed_limit_kmh": SPEED_LIMITS, "lane_width_m": LANE_WIDTHS,
        "weather": WEATHERS, "time_of_day": TIMES_OF_DAY, "arrival_rate_vph": ARRIVAL_RATES,
    }
    columns = {}
    for name, levels in defaults.items():
        weights = config.mixture.get(name)
        if weights is None:
            probs = np.full(len(levels), 1.0 / len(levels))
            values = list(levels)
        else:
            values = list(weights)
            probs = np.array([weights[v] for v in values], dtype=float)
            probs = probs / probs.sum()
        idx = rng.choice(len(values), size=total, p=probs)
        columns[name] = [values[i] for i in idx]
    return [
        ScenarioContext(
            road_type=columns["road_type"][i],
            speed_limit_kmh=columns["speed_limit_kmh"][i],
            lane_width_m=columns["lane_width_m"][i],
            weather=columns["weather"][i],
            time_of_day=columns["time_of_day"][i],
            arrival_rate_vph=columns["arrival_rate_vph"][i],
            n_lanes=2,
        )
        for i in range(total)
    ]


def generate(config):
    """Generate the full corpus for a GeneratorConfig, deterministically."""
    root = np.random.SeedSequence(config.master_seed)
    context_rng = np.random.default_rng(root.spawn(1)[0])
    contexts = sample_contexts(config, context_rng)

    coeffs = config.coefficients
    instances = []
    idx = 0
    for p in range(config.n_participants):
        participant_rng = np.random.default_rng(np.random.SeedSequence((config.master_seed, p, 0xFACE)))
        base_speed = float(np.clip(
            participant_rng.normal(coeffs.base_speed_mean, coeffs.base_speed_std),
            *coeffs.base_speed_clip))
        critical_gap = float(max(participant_rng.normal(coeffs.critical_gap_mean_s,
                                                        coeffs.critical_gap_std_s), 1.0))
        for s in range(config.scenarios_per_participant):
            rng = np.random.default_rng(np.random.SeedSequence((config.master_seed, p, s)))
            instance_id = f"syn-{config.master_seed}-{p:04d}-{s:03d}"
            instances.append(simulate_crossing(contexts[idx], base_speed, critical_gap,
                                               rng, config, instance_id))
            idx += 1
    return instances


def benchmark_config(seed=7):
    """The one fixed GeneratorConfig behind the 3,000-instance benchmark corpus."""
    return GeneratorConfig(n_participants=150, scenarios_per_participant=20, master_seed=seed)


def benchmark_corpus(seed=7):
    """The canonical fixed corpus used by the acceptance suite."""
    return generate(benchmark_config(seed))


def corpus_checksum(instances):
    """Stable content hash of a corpus (order-sensitive)."""
    h = hashlib.sha256()
    for inst in instances:
        h.update(json.dumps(inst.to_dict(), sort_keys=True, separators=(",", ":")).encode())
    return h.hexdigest()
