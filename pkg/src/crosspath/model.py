"""Auxiliary-input (aux) and vanilla LSTM networks: build, train, evaluate.

Aux topology: stacked LSTM over the input sequence; the final hidden state
branches to (a) a linear+sigmoid secondary head predicting the flattened
target and (b) concatenation with the context vector, batch normalization,
dropout, a relu dense stack and a sigmoid output head. The vanilla baseline
is the stacked LSTM plus the sigmoid output head only (no context, single
loss).

Training minimizes masked MSE(main) + lambda * masked MSE(secondary) in
normalized space; evaluation reports that loss alongside RMSE in meters.
Flattened target layout is step-major: (x_0, y_0, x_1, y_1, ...).
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BuildError, EmptyTargetError, StateError, TrainingDivergedError
from .numkit import (
    Adam,
    BatchNorm,
    Dense,
    LSTMLayer,
    Tensor,
    backward,
    clip_global_norm,
    concat,
    dropout_forward,
    lstm_seq,
    masked_mse,
    no_grad,
    scale,
    seq_last,
)
from .numkit.serialize import read_blob, write_blob
from .windowing import NormalizationParams, WindowingSpec

MODEL_MAGIC = b"CROSSPATH-M1"


@dataclass
class ModelConfig:
    kind: str = "aux"  # aux | vanilla
    lstm_layers: int = 1
    dense_layers: int = 1  # aux only; 0 collapses the dense stack (and batchnorm)
    nodes: int = 50
    dropout: float = 0.0
    batch_size: int = 128
    epochs: int = 100
    secondary_loss_weight: float = 0.2
    learning_rate: float = 1e-3
    input_features: int = 4
    context_length: int = 10
    output_steps: int = 10

    def __post_init__(self):
        if self.kind not in ("aux", "vanilla"):
            raise BuildError(f"kind must be aux|vanilla, got {self.kind!r}")
        if self.lstm_layers < 1 or self.nodes < 1 or self.output_steps < 1:
            raise BuildError("lstm_layers, nodes and output_steps must be >= 1")
        if self.dense_layers < 0:
            raise BuildError("dense_layers must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise BuildError("dropout must lie in [0, 1)")
        if self.secondary_loss_weight < 0:
            raise BuildError("secondary_loss_weight must be >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, record):
        return cls(**record)


@dataclass
class TrainingHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_rmse: list = field(default_factory=list)
    val_rmse: list = field(default_factory=list)
    best_epoch: int = 0

    def rows(self):
        out = []
        for i in range(len(self.train_loss)):
            out.append((i + 1, self.train_loss[i], self.val_loss[i],
                        self.train_rmse[i], self.val_rmse[i]))
        return out


class Network:
    """A built (possibly trained) model with named parameters."""

    def __init__(self, config, seed=0):
        self.config = config
        self.norm = None  # NormalizationParams, attached by training
        self.wspec = None  # WindowingSpec dict, attached by the pipeline
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x1217)))
        c = config

        self.lstm_stack = []
        in_dim = c.input_features
        for i in range(c.lstm_layers):
            self.lstm_stack.append(LSTMLayer(in_dim, c.nodes, rng, name=f"lstm{i}"))
            in_dim = c.nodes
        out_dim = 2 * c.output_steps

        self.bn = None
        self.dense_stack = []
        self.secondary = None
        if c.kind == "aux":
            self.secondary = Dense(c.nodes, out_dim, "sigmoid", rng, name="sec")
            merged = c.nodes + c.context_length
            width = merged
            if c.dense_layers > 0:
                self.bn = BatchNorm(merged, name="bn")
                for i in range(c.dense_layers):
                    self.dense_stack.append(Dense(width, c.nodes, "relu", rng, name=f"dense{i}"))
                    width = c.nodes
            self.out = Dense(width, out_dim, "sigmoid", rng, name="out")
        else:
            self.out = Dense(c.nodes, out_dim, "sigmoid", rng, name="out")

    def parameters(self):
        params = {}
        for layer in self.lstm_stack:
            params.update(dict(layer.parameters()))
        if self.secondary is not None:
            params.update(dict(self.secondary.parameters()))
        if self.bn is not None:
            params.update(dict(self.bn.parameters()))
        for layer in self.dense_stack:
            params.update(dict(layer.parameters()))
        params.update(dict(self.out.parameters()))
        return params

    def parameter_count(self):
        return sum(p.data.size for p in self.parameters().values())

    def forward(self, inputs, contexts, mode="infer", rng=None):
        """inputs [B, T, F] batch-major, contexts [B, C]; returns (main, secondary).

        Outputs are [B, 2 * output_steps] Tensors in normalized space.
        """
        c = self.config
        x = Tensor(np.ascontiguousarray(np.transpose(inputs, (1, 0, 2))))  # time-major
        seq = x
        for i, layer in enumerate(self.lstm_stack):
            seq = lstm_seq(seq, layer.wx, layer.wh, layer.b)
            if mode == "train" and c.dropout > 0 and i < len(self.lstm_stack) - 1:
                seq = dropout_forward(seq, c.dropout, mode, rng)
        h_last = seq_last(seq)

        if c.kind == "vanilla":
            return self.out(h_last), None

        sec = self.secondary(h_last)
        merged = h_last
        if c.context_length > 0:
            merged = concat(h_last, Tensor(np.asarray(contexts)[:, :c.context_length]), axis=1)
        if self.bn is not None:
            merged = self.bn(merged, mode)
            merged = dropout_forward(merged, c.dropout, mode, rng) if mode == "train" else merged
        for layer in self.dense_stack:
            merged = layer(merged)
        return self.out(merged), sec


def build(config, seed=0):
    """Initialize a network from a config (deterministic given seed)."""
    return Network(config, seed=seed)


def flatten_targets(targets, masks):
    """[N, T, 2] targets + [N, T] mask -> step-major flats [N, 2T], [N, 2T]."""
    n, t, _ = targets.shape
    flat = targets.reshape(n, 2 * t)
    mask_flat = np.repeat(masks, 2, axis=1)
    return flat, mask_flat


def dual_loss(predictions, secondary_predictions, targets_flat, mask_flat, lam):
    """Masked MSE(main) + lam * masked MSE(secondary); scalar Tensor."""
    if not mask_flat.any():
        raise EmptyTargetError("loss over an all-masked target")
    loss = masked_mse(predictions, targets_flat, mask_flat)
    if secondary_predictions is not None and lam > 0.0:
        loss = loss + scale(masked_mse(secondary_predictions, targets_flat, mask_flat), lam)
    return loss


def rmse(predictions_m, targets_m, mask):
    """Root mean squared error pooled over all valid x and y entries, meters."""
    predictions_m = np.asarray(predictions_m)
    targets_m = np.asarray(targets_m)
    if predictions_m.shape != targets_m.shape:
        raise StateError(f"rmse shape mismatch {predictions_m.shape} vs {targets_m.shape}")
    mask2 = np.repeat(np.asarray(mask, dtype=bool), 2, axis=-1).reshape(predictions_m.shape)
    count = int(mask2.sum())
    if count == 0:
        raise EmptyTargetError("rmse over an all-masked target")
    diff = np.where(mask2, predictions_m - targets_m, 0.0)
    return float(np.sqrt((diff * diff).sum() / count))


def _batches(n, batch_size, order=None, allow_single=True):
    """Index chunks; size-1 remainders are dropped only when disallowed
    (train-mode batchnorm needs >= 2 rows)."""
    idx = np.arange(n) if order is None else order
    for start in range(0, n, batch_size):
        chunk = idx[start:start + batch_size]
        if allow_single or len(chunk) >= 2 or n < 2:
            yield chunk


def evaluate(net, samples, batch_size=1024):
    """(normalized dual loss, RMSE meters) over a SampleSet, infer mode."""
    c = net.config
    targets_flat, mask_flat = flatten_targets(samples.targets, samples.masks)
    total_loss = 0.0
    total_count = 0
    preds_norm = np.empty_like(targets_flat)
    with no_grad():
        for chunk in _batches(len(samples), batch_size):
            main, sec = net.forward(samples.inputs[chunk], samples.contexts[chunk], mode="infer")
            preds_norm[chunk] = main.data
            valid = int(mask_flat[chunk].sum())
            if valid:
                loss = dual_loss(main, sec, targets_flat[chunk], mask_flat[chunk],
                                 c.secondary_loss_weight)
                total_loss += float(loss.data) * valid
                total_count += valid
    loss_value = total_loss / max(total_count, 1)
    preds_m = denormalize_predictions(net, preds_norm)
    return loss_value, rmse(preds_m, samples.targets_raw, samples.masks)


def denormalize_predictions(net, preds_norm):
    """[N, 2T] normalized sigmoid outputs -> [N, T, 2] meters via net.norm."""
    if net.norm is None:
        raise StateError("network has no normalization params attached")
    n = preds_norm.shape[0]
    t = preds_norm.shape[1] // 2
    return net.norm.invert_xy(preds_norm.reshape(n, t, 2))


def predict(net, samples, batch_size=1024):
    """Denormalized coordinate sequences; masked steps omitted per sample."""
    preds_norm = np.empty((len(samples), 2 * net.config.output_steps))
    with no_grad():
        for chunk in _batches(len(samples), batch_size):
            main, _ = net.forward(samples.inputs[chunk], samples.contexts[chunk], mode="infer")
            preds_norm[chunk] = main.data
    preds_m = denormalize_predictions(net, preds_norm)
    return [preds_m[i][samples.masks[i]] for i in range(len(samples))]


def train_model(net, train_samples, val_samples, seed, epochs=None):
    """Mini-batch training with seeded shuffling; keeps the best-validation
    parameters. Returns a TrainingHistory (the network ends at its best epoch).
    """
    c = net.config
    epochs = c.epochs if epochs is None else epochs
    if len(train_samples) == 0:
        raise StateError("empty training set")
    root = np.random.SeedSequence((seed, 0x7A41))
    shuffle_seq, dropout_seq = root.spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)

    net.norm = train_samples.norm
    params = net.parameters()
    opt = Adam(params, lr=c.learning_rate)
    targets_flat, mask_flat = flatten_targets(train_samples.targets, train_samples.masks)
    n = len(train_samples)
    train_eval_rows = np.arange(min(n, 4096))  # fixed subset keeps epoch cost bounded
    history = TrainingHistory()
    best_loss = np.inf
    best_state = None

    for epoch in range(1, epochs + 1):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        epoch_count = 0
        for chunk in _batches(n, c.batch_size, order, allow_single=False):
            valid = int(mask_flat[chunk].sum())
            if valid == 0:
                continue
            main, sec = net.forward(train_samples.inputs[chunk], train_samples.contexts[chunk],
                                    mode="train", rng=dropout_rng)
            loss = dual_loss(main, sec, targets_flat[chunk], mask_flat[chunk],
                             c.secondary_loss_weight)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            backward(loss)
            clip_global_norm(params, 5.0)
            opt.step()
            opt.zero_grad()
            epoch_loss += value * valid
            epoch_count += valid
        train_loss = epoch_loss / max(epoch_count, 1)

        _, train_rmse_val = evaluate(net, train_samples.subset(train_eval_rows))
        val_loss, val_rmse_val = evaluate(net, val_samples)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}", epoch=epoch)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.train_rmse.append(train_rmse_val)
        history.val_rmse.append(val_rmse_val)
        if val_loss < best_loss:
            best_loss = val_loss
            history.best_epoch = epoch
            best_state = {name: p.data.copy() for name, p in params.items()}
            if net.bn is not None:
                best_state["bn.running_mean:stat"] = net.bn.running_mean.copy()
                best_state["bn.running_var:stat"] = net.bn.running_var.copy()

    if best_state is not None:
        for name, p in params.items():
            p.data[...] = best_state[name]
        if net.bn is not None:
            net.bn.running_mean[...] = best_state["bn.running_mean:stat"]
            net.bn.running_var[...] = best_state["bn.running_var:stat"]
    return history


def save_model(net, path):
    """Model artifact: weights container + config + norm + schema version."""
    if net.norm is None:
        raise StateError("refusing to save a model without normalization params")
    header = {
        "schema": "crosspath/1",
        "config": net.config.to_dict(),
        "norm": net.norm.to_dict(),
        "wspec": net.wspec,
    }
    tensors = {name: p.data for name, p in net.parameters().items()}
    if net.bn is not None:
        tensors["bn.running_mean:stat"] = net.bn.running_mean
        tensors["bn.running_var:stat"] = net.bn.running_var
    write_blob(path, MODEL_MAGIC, header, tensors)


def load_model(path):
    header, tensors = read_blob(path, MODEL_MAGIC)
    config = ModelConfig.from_dict(header["config"])
    net = Network(config, seed=0)
    params = net.parameters()
    for name, p in params.items():
        p.data[...] = tensors[name]
    if net.bn is not None:
        net.bn.running_mean[...] = tensors["bn.running_mean:stat"]
        net.bn.running_var[...] = tensors["bn.running_var:stat"]
    net.norm = NormalizationParams.from_dict(header["norm"])
    net.wspec = header.get("wspec")
    return net
