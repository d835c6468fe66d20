"""Shapley-value attribution of the six contextual variables to per-instance
prediction error.

The value function of a coalition S, for one crossing instance: replace the
context features outside S with a background sample's values, predict the
instance's windows with the trained model, and score RMSE in meters against
the instance's ground truth; v(S) is the mean over the background set. The
attribution Phi_i is the exact Shapley sum over all subsets with factorial
weights, so positive Phi_i means feature i's observed value increases the
prediction error for that instance.

The enumeration is exact (2^|F| values per instance, guarded at |F| <= 12);
coalition mixing happens on the encoded context vector in fixed slot groups,
which matches field-level replacement because encoding is per-field. A
retrain-per-coalition variant of the value function (one model trained per
subset with the out-of-coalition slots zeroed) exists for tiny setups.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .dataschema import CONTEXT_FEATURES, CONTEXT_SLOTS, encode_context
from .errors import ConfigError, SizeError, StateError
from .model import build, denormalize_predictions, rmse, train_model
from .numkit import no_grad
from .seeds import DOMAIN_BACKGROUND, derive_seed

EFFICIENCY_TOL = 1e-9


def feature_groups(mode="variables"):
    """Slot groups of the encoded context vector for each attribution player.

    "variables": the six scenario variables (one-hot groups move together);
    "encoded_dims": every encoded dimension is its own player.
    """
    if mode == "variables":
        return [(name, tuple(CONTEXT_SLOTS[name])) for name in CONTEXT_FEATURES]
    if mode == "encoded_dims":
        return [(f"dim{j}", (j,)) for j in range(10)]
    raise ConfigError(f"unknown attribution mode {mode!r}")


@dataclass
class Explanation:
    instance_id: str
    feature_names: tuple
    phi: np.ndarray
    v_full: float
    v_empty: float
    feature_values: dict = field(default_factory=dict)

    def efficiency_gap(self):
        return abs(float(self.phi.sum()) - (self.v_full - self.v_empty))


def shapley_exact(value_fn, n_players):
    """Exact Shapley values of a coalition value function.

    value_fn(mask) -> float, where mask is an int bitmask over players.
    Returns (phi array, v_full, v_empty). All 2^n coalition values are
    evaluated once and reused.
    """
    if n_players > 12:
        raise SizeError(f"exact enumeration guarded at 12 players, got {n_players}")
    values = np.empty(1 << n_players)
    for mask in range(1 << n_players):
        values[mask] = value_fn(mask)
    fact = [math.factorial(k) for k in range(n_players + 1)]
    denom = fact[n_players]
    phi = np.zeros(n_players)
    full = (1 << n_players) - 1
    for i in range(n_players):
        bit = 1 << i
        total = 0.0
        rest = full & ~bit
        s = rest
        # iterate subsets of the other players (standard submask walk)
        while True:
            size = bin(s).count("1")
            w = fact[size] * fact[n_players - size - 1] / denom
            total += w * (values[s | bit] - values[s])
            if s == 0:
                break
            s = (s - 1) & rest
        phi[i] = total
    return phi, float(values[full]), float(values[0])


def _mix_contexts(inst_vec, bg_vecs, groups, mask):
    """Background vectors with in-coalition slots overwritten by the instance."""
    mixed = bg_vecs.copy()
    for i, (_, slots) in enumerate(groups):
        if mask & (1 << i):
            for j in slots:
                mixed[:, j] = inst_vec[j]
    return mixed


class ErrorValueFunction:
    """v(S) for one instance: background-marginalized prediction RMSE."""

    def __init__(self, net, inputs, targets_raw, masks, inst_context_vec,
                 background_vecs, groups):
        if len(background_vecs) == 0:
            raise ConfigError("empty background set")
        if net.norm is None:
            raise StateError("model has no normalization params attached")
        self.net = net
        self.inputs = inputs            # [K, T, F] this instance's windows
        self.targets_raw = targets_raw  # [K, T_out, 2]
        self.masks = masks              # [K, T_out]
        self.inst_vec = inst_context_vec
        self.bg_vecs = np.asarray(background_vecs)
        self.groups = groups

    def __call__(self, mask):
        mixed = _mix_contexts(self.inst_vec, self.bg_vecs, self.groups, mask)
        K = self.inputs.shape[0]
        M = mixed.shape[0]
        # one forward pass per coalition: tile windows over backgrounds
        inputs = np.repeat(self.inputs, M, axis=0)
        contexts = np.tile(mixed, (K, 1))
        with no_grad():
            main, _ = self.net.forward(inputs, contexts, mode="infer")
        preds = denormalize_predictions(self.net, main.data)
        total = 0.0
        for m in range(M):
            rows = np.arange(K) * M + m
            total += rmse(preds[rows], self.targets_raw, self.masks)
        return total / M


def subsample_windows(rows, limit):
    """Deterministic evenly spaced subset of an instance's window rows."""
    if limit is None or len(rows) <= limit:
        return rows
    idx = np.linspace(0, len(rows) - 1, limit).round().astype(int)
    return rows[np.unique(idx)]


def background_contexts(instances, size, seed):
    """Seeded subsample of training-instance contexts, encoded."""
    if not instances:
        raise ConfigError("empty background source")
    rng = np.random.default_rng(derive_seed(seed, DOMAIN_BACKGROUND))
    idx = rng.choice(len(instances), size=min(size, len(instances)), replace=False)
    return np.stack([encode_context(instances[i].context) for i in sorted(idx)])


def explain_instance(net, samples, instance_id, bg_vecs, mode="variables",
                     window_limit=8, context=None):
    """Exact Shapley attribution for one instance in a SampleSet."""
    groups = feature_groups(mode)
    rows = samples.rows_for([instance_id])
    if len(rows) == 0:
        raise ConfigError(f"instance {instance_id} has no samples")
    rows = subsample_windows(rows, window_limit)
    inst_vec = samples.contexts[rows[0]]
    vf = ErrorValueFunction(net, samples.inputs[rows], samples.targets_raw[rows],
                            samples.masks[rows], inst_vec, bg_vecs, groups)
    phi, v_full, v_empty = shapley_exact(vf, len(groups))
    values = {}
    if context is not None:
        for name, _ in groups:
            values[name] = getattr(context, name, None)
    return Explanation(
        instance_id=instance_id,
        feature_names=tuple(name for name, _ in groups),
        phi=phi,
        v_full=v_full,
        v_empty=v_empty,
        feature_values=values,
    )


def explain_corpus(net, samples, corpus, instance_ids, background_instances,
                   seed, background_size=100, mode="variables", window_limit=8):
    """Per-instance Explanations plus beeswarm-ready summary rows.

    Deterministic given the seed (background subsampling is the only
    randomness). Summary rows: (instance_id, feature, feature_value, phi).
    """
    by_id = {inst.id: inst for inst in corpus}
    bg_vecs = background_contexts(background_instances, background_size, seed)
    explanations = []
    summary = []
    for iid in instance_ids:
        expl = explain_instance(net, samples, iid, bg_vecs, mode=mode,
                                window_limit=window_limit,
                                context=by_id[iid].context if iid in by_id else None)
        if expl.efficiency_gap() > EFFICIENCY_TOL:
            raise StateError(
                f"efficiency violated for {iid}: gap {expl.efficiency_gap():.2e}")
        explanations.append(expl)
        for name, value in zip(expl.feature_names, expl.phi):
            summary.append({
                "instance_id": iid,
                "feature": name,
                "feature_value": expl.feature_values.get(name),
                "phi": float(value),
            })
    return explanations, summary


def retrain_value_function(config, train_samples, instance_samples, groups, seed,
                           epochs=None):
    """The literal per-coalition variant: one model per subset, trained with
    the out-of-coalition context slots zeroed. Tiny setups only."""
    if len(groups) > 4:
        raise SizeError("retrain strategy guarded at 4 players")
    models = {}

    def train_for(mask):
        if mask in models:
            return models[mask]
        slots = []
        for i, (_, group_slots) in enumerate(groups):
            if not mask & (1 << i):
                slots.extend(group_slots)
        masked = train_samples.subset(np.arange(len(train_samples)))
        masked.contexts = masked.contexts.copy()
        masked.contexts[:, slots] = 0.0
        n = len(masked)
        val_n = max(2, n // 10)
        net = build(config, seed=derive_seed(seed, mask))
        train_model(net, masked.subset(np.arange(n - val_n)),
                    masked.subset(np.arange(n - val_n, n)),
                    seed=derive_seed(seed, mask, 1), epochs=epochs)
        models[mask] = (net, slots)
        return models[mask]

    def value(mask):
        net, slots = train_for(mask)
        contexts = instance_samples.contexts.copy()
        contexts[:, slots] = 0.0
        with no_grad():
            main, _ = net.forward(instance_samples.inputs, contexts, mode="infer")
        preds = denormalize_predictions(net, main.data)
        return rmse(preds, instance_samples.targets_raw, instance_samples.masks)

    return value
