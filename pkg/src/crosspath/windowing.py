"""Convert crossing instances into model-ready sequence samples.

Two preparation schemes: time-based sliding windows (predict the next t2
seconds from the last t1 seconds, dense stride) and distance-based single
splits (predict the remainder once a fraction p of the road width has been
crossed). Targets are always (x, y); input channels depend on the variant.

Distance-based samples have ragged natural shapes: targets are right-padded
to the corpus-wide maximum remaining length under a validity mask, and inputs
are left-padded by replicating the first frame (a stationary prefix) so one
fixed-shape network trains on the whole corpus.
"""

from dataclasses import dataclass, field

import numpy as np

from .dataschema import NO_VEHICLE, STEP_SECONDS, encode_context
from .errors import ConfigError, DegenerateSplitError, SplitError, StateError
from .numkit.serialize import read_blob, write_blob

SAMPLES_MAGIC = b"CROSSPATH-S1"
STEPS_PER_SECOND = int(round(1.0 / STEP_SECONDS))

# point-array columns are (t, x, y, o, d); variants list feature columns in
# the fixed spec order
VARIANT_COLUMNS = {
    "xy": (1, 2),
    "xyo": (1, 2, 3),
    "xyd": (1, 2, 4),
    "xyod": (1, 2, 3, 4),
}
VARIANT_NAMES = {
    "xy": ("x", "y"),
    "xyo": ("x", "y", "o"),
    "xyd": ("x", "y", "d"),
    "xyod": ("x", "y", "o", "d"),
}


@dataclass
class WindowingSpec:
    """Data preparation parameters; labels follow the T_t1_t2 / D_p naming."""

    mode: str  # "time" | "distance"
    t1_s: float = 1.0
    t2_s: float = 1.0
    p: float = 0.5
    variant: str = "xyod"
    stride_steps: int = 1

    def __post_init__(self):
        if self.mode not in ("time", "distance"):
            raise ConfigError(f"windowing mode must be time|distance, got {self.mode!r}")
        if self.variant not in VARIANT_COLUMNS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.mode == "time":
            for name, value in (("t1_s", self.t1_s), ("t2_s", self.t2_s)):
                steps = value * STEPS_PER_SECOND
                if value <= 0 or abs(steps - round(steps)) > 1e-9:
                    raise ConfigError(f"{name}={value} must be a positive multiple of {STEP_SECONDS}")
            if self.stride_steps < 1:
                raise ConfigError("stride_steps must be >= 1")
        else:
            if not 0.0 < self.p < 1.0:
                raise ConfigError(f"p={self.p} must lie in (0, 1)")

    @property
    def t1_steps(self):
        return int(round(self.t1_s * STEPS_PER_SECOND))

    @property
    def t2_steps(self):
        return int(round(self.t2_s * STEPS_PER_SECOND))

    @property
    def label(self):
        def fmt(seconds):
            return str(int(seconds)) if float(seconds).is_integer() else str(seconds)

        if self.mode == "time":
            return f"T_{fmt(self.t1_s)}_{fmt(self.t2_s)}"
        return f"D_{str(self.p).replace('0.', '')}"

    @classmethod
    def from_label(cls, label, variant="xyod", stride_steps=1):
        """Parse data-type labels such as T_1_2 or D_5."""
        parts = label.split("_")
        if parts[0] == "T" and len(parts) == 3:
            return cls(mode="time", t1_s=float(parts[1]), t2_s=float(parts[2]),
                       variant=variant, stride_steps=stride_steps)
        if parts[0] == "D" and len(parts) == 2:
            return cls(mode="distance", p=float(f"0.{parts[1]}"), variant=variant)
        raise ConfigError(f"unrecognized data type label {label!r}")


def select_features(points, variant):
    """Feature matrix for the requested variant, column order as listed."""
    if variant not in VARIANT_COLUMNS:
        raise ConfigError(f"unknown variant {variant!r}")
    if hasattr(points, "point_array"):
        arr = points.point_array()
    else:
        arr = np.asarray(points, dtype=np.float64)
    return arr[:, list(VARIANT_COLUMNS[variant])]


def count_time_windows(n_steps, t1_s, t2_s, stride_steps=1):
    """Closed-form sliding window count for an n-step instance."""
    span = int(round((t1_s + t2_s) * STEPS_PER_SECOND))
    if n_steps < span:
        return 0
    return (n_steps - span) // stride_steps + 1


def window_time_based(instance, t1_s, t2_s, stride_steps=1):
    """Sliding windows over one instance.

    Returns a list of (input_features, target_xy) raw-valued pairs using the
    instance's full (x, y, o, d) channels; too-short instances yield [].
    """
    arr = instance.point_array()
    n = arr.shape[0]
    t1 = int(round(t1_s * STEPS_PER_SECOND))
    t2 = int(round(t2_s * STEPS_PER_SECOND))
    out = []
    for start in range(0, n - (t1 + t2) + 1, stride_steps):
        window = arr[start:start + t1 + t2]
        out.append((window[:t1], window[t1:, 1:3].copy()))
    return out


def split_distance_based(instance, p):
    """Single split at the first step where y >= p * road_width.

    Returns (input_points, target_xy); raises DegenerateSplitError when the
    split would leave an empty input or target.
    """
    arr = instance.point_array()
    width = instance.context.road_width
    threshold = p * width
    reached = np.nonzero(arr[:, 2] >= threshold)[0]
    if len(reached) == 0:
        raise DegenerateSplitError(
            f"instance {instance.id}: never reaches y={threshold:.2f} (p={p})")
    split = int(reached[0])
    if split == 0 or split == arr.shape[0]:
        raise DegenerateSplitError(f"instance {instance.id}: split index {split} is degenerate")
    return arr[:split], arr[split:, 1:3].copy()


@dataclass
class NormalizationParams:
    """Per-feature min-max fitted on training instances only.

    Constant features map to 0.5; the d sentinel (999.0) is excluded from
    fitting and clips to the fitted max on apply. x/y occupy the first two
    feature columns for every variant, so targets share their scaling.
    """

    feature_names: tuple = ()
    mins: np.ndarray = field(default_factory=lambda: np.zeros(0))
    maxs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fitted: bool = False

    def _check(self):
        if not self.fitted:
            raise StateError("normalization params have not been fitted")

    def apply(self, values):
        self._check()
        values = np.asarray(values, dtype=np.float64)
        span = self.maxs - self.mins
        out = np.empty_like(values)
        for j in range(values.shape[-1]):
            if span[j] <= 0:
                out[..., j] = 0.5
            else:
                out[..., j] = np.clip((values[..., j] - self.mins[j]) / span[j], 0.0, 1.0)
        return out

    def invert(self, values):
        self._check()
        values = np.asarray(values, dtype=np.float64)
        span = self.maxs - self.mins
        out = np.empty_like(values)
        for j in range(values.shape[-1]):
            if span[j] <= 0:
                out[..., j] = self.mins[j]
            else:
                out[..., j] = values[..., j] * span[j] + self.mins[j]
        return out

    def apply_xy(self, values):
        """Normalize an [..., 2] (x, y) array with the x/y feature scaling."""
        sub = NormalizationParams(self.feature_names[:2], self.mins[:2], self.maxs[:2], True)
        return sub.apply(values)

    def invert_xy(self, values):
        sub = NormalizationParams(self.feature_names[:2], self.mins[:2], self.maxs[:2], True)
        return sub.invert(values)

    def to_dict(self):
        self._check()
        return {"features": list(self.feature_names), "mins": self.mins.tolist(),
                "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, record):
        return cls(tuple(record["features"]), np.array(record["mins"], dtype=np.float64),
                   np.array(record["maxs"], dtype=np.float64), True)


def fit_normalization(instances, variant):
    """Fit per-feature min/max over the given (training) instances."""
    if not instances:
        raise StateError("cannot fit normalization on an empty training set")
    names = VARIANT_NAMES[variant]
    stacked = np.concatenate([select_features(inst, variant) for inst in instances])
    mins = np.empty(stacked.shape[1])
    maxs = np.empty(stacked.shape[1])
    for j, name in enumerate(names):
        col = stacked[:, j]
        if name == "d":
            col = col[col != NO_VEHICLE]
            if col.size == 0:
                col = np.zeros(1)
        mins[j] = col.min()
        maxs[j] = col.max()
    return NormalizationParams(names, mins, maxs, True)


@dataclass
class DatasetSplit:
    """Instance-id level split: held-out test ids plus k train/val folds."""

    test_ids: tuple
    folds: tuple  # tuple of tuples of ids
    seed: int
    test_uses: list = field(default_factory=list)

    @property
    def pool_ids(self):
        out = []
        for fold in self.folds:
            out.extend(fold)
        return tuple(out)

    def mark_test_use(self, label):
        """Bookkeeping for the audit trail: every test-set access is recorded."""
        self.test_uses.append(label)

    def to_dict(self):
        return {"seed": self.seed, "test_ids": list(self.test_ids),
                "folds": [list(f) for f in self.folds]}

    @classmethod
    def from_dict(cls, record):
        return cls(tuple(record["test_ids"]), tuple(tuple(f) for f in record["folds"]),
                   record["seed"])


def make_splits(instance_ids, seed, k=8, test_fraction=0.2):
    """Deterministic 20% test split plus k folds over the remainder."""
    ids = sorted(instance_ids)
    n = len(ids)
    if n < 10:
        raise SplitError(f"need at least 10 instances to split, got {n}")
    rng = np.random.default_rng(seed)
    perm = [ids[i] for i in rng.permutation(n)]
    n_test = int(round(n * test_fraction))
    test_ids = tuple(sorted(perm[:n_test]))
    pool = perm[n_test:]
    if len(pool) < k:
        raise SplitError(f"pool of {len(pool)} instances cannot form {k} folds")
    folds = tuple(tuple(sorted(chunk.tolist())) for chunk in np.array_split(np.array(pool), k))
    return DatasetSplit(test_ids=test_ids, folds=folds, seed=seed)


@dataclass
class SampleSet:
    """Model-ready samples: normalized inputs/targets plus raw-meter targets."""

    spec: WindowingSpec
    inputs: np.ndarray       # [N, T_in, F] in [0, 1]
    contexts: np.ndarray     # [N, 10]
    targets: np.ndarray      # [N, T_out, 2] in [0, 1]
    targets_raw: np.ndarray  # [N, T_out, 2] meters
    masks: np.ndarray        # [N, T_out] bool
    instance_ids: list
    norm: NormalizationParams

    def __len__(self):
        return self.inputs.shape[0]

    def rows_for(self, ids):
        wanted = set(ids)
        return np.array([i for i, iid in enumerate(self.instance_ids) if iid in wanted], dtype=int)

    def subset(self, rows):
        return SampleSet(
            spec=self.spec,
            inputs=self.inputs[rows],
            contexts=self.contexts[rows],
            targets=self.targets[rows],
            targets_raw=self.targets_raw[rows],
            masks=self.masks[rows],
            instance_ids=[self.instance_ids[i] for i in rows],
            norm=self.norm,
        )

    def save(self, path):
        header = {
            "schema": "crosspath/1",
            "spec": {
                "mode": self.spec.mode, "t1_s": self.spec.t1_s, "t2_s": self.spec.t2_s,
                "p": self.spec.p, "variant": self.spec.variant,
                "stride_steps": self.spec.stride_steps,
            },
            "norm": self.norm.to_dict(),
            "instance_ids": self.instance_ids,
        }
        tensors = {
            "inputs": self.inputs,
            "contexts": self.contexts,
            "targets": self.targets,
            "targets_raw": self.targets_raw,
            "masks": self.masks.astype(np.float64),
        }
        write_blob(path, SAMPLES_MAGIC, header, tensors)

    @classmethod
    def load(cls, path):
        header, tensors = read_blob(path, SAMPLES_MAGIC)
        return cls(
            spec=WindowingSpec(**header["spec"]),
            inputs=tensors["inputs"],
            contexts=tensors["contexts"],
            targets=tensors["targets"],
            targets_raw=tensors["targets_raw"],
            masks=tensors["masks"] > 0.5,
            instance_ids=list(header["instance_ids"]),
            norm=NormalizationParams.from_dict(header["norm"]),
        )


def build_sample_set(instances, spec, norm, skip_degenerate=True):
    """Window a corpus into a normalized SampleSet.

    `norm` must be fitted on training instances only. Distance-based
    degenerate splits are dropped (mirrors corpora where a few instances
    cannot be split), unless skip_degenerate is False.
    """
    cols = list(VARIANT_COLUMNS[spec.variant])
    raw_inputs, raw_targets, ids = [], [], []
    for inst in instances:
        if spec.mode == "time":
            for window_in, target in window_time_based(inst, spec.t1_s, spec.t2_s, spec.stride_steps):
                raw_inputs.append(window_in[:, cols])
                raw_targets.append(target)
                ids.append(inst.id)
        else:
            try:
                window_in, target = split_distance_based(inst, spec.p)
            except DegenerateSplitError:
                if skip_degenerate:
                    continue
                raise
            raw_inputs.append(window_in[:, cols])
            raw_targets.append(target)
            ids.append(inst.id)

    n = len(raw_inputs)
    n_features = len(cols)
    if n == 0:
        t_in = spec.t1_steps if spec.mode == "time" else 0
        t_out = spec.t2_steps if spec.mode == "time" else 0
        return SampleSet(spec, np.zeros((0, t_in, n_features)), np.zeros((0, 10)),
                         np.zeros((0, t_out, 2)), np.zeros((0, t_out, 2)),
                         np.zeros((0, t_out), dtype=bool), [], norm)

    t_in = max(r.shape[0] for r in raw_inputs)
    t_out = max(r.shape[0] for r in raw_targets)
    inputs = np.empty((n, t_in, n_features))
    targets_raw = np.zeros((n, t_out, 2))
    masks = np.zeros((n, t_out), dtype=bool)
    for i, (win, tgt) in enumerate(zip(raw_inputs, raw_targets)):
        pad = t_in - win.shape[0]
        if pad:
            inputs[i, :pad] = win[0]  # replicate first frame (left padding)
        inputs[i, pad:] = win
        k = tgt.shape[0]
        targets_raw[i, :k] = tgt
        masks[i, :k] = True

    instance_map = {inst.id: inst for inst in instances}
    contexts = np.stack([encode_context(instance_map[iid].context) for iid in ids])
    norm_inputs = norm.apply(inputs)
    norm_targets = norm.apply_xy(targets_raw)
    norm_targets[~masks] = 0.0  # masked-out entries stay zero
    return SampleSet(spec, norm_inputs, contexts, norm_targets, targets_raw, masks, ids, norm)
