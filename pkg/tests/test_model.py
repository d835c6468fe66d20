"""Network topology, dual loss, RMSE, training behaviour and artifacts."""

import numpy as np
import pytest

from crosspath.errors import BuildError, EmptyTargetError, StateError
from crosspath.model import (
    ModelConfig,
    Network,
    build,
    dual_loss,
    evaluate,
    flatten_targets,
    load_model,
    predict,
    rmse,
    save_model,
    train_model,
)
from crosspath.numkit import Tensor, check_gradients
from crosspath.windowing import WindowingSpec, build_sample_set, fit_normalization
from tests.test_dataschema import make_instance


def lstm_param_count(in_dim, hidden):
    return in_dim * 4 * hidden + hidden * 4 * hidden + 4 * hidden


def dense_param_count(in_dim, out_dim):
    return in_dim * out_dim + out_dim


def test_aux_parameter_count_closed_form():
    config = ModelConfig(kind="aux", lstm_layers=2, dense_layers=2, nodes=50,
                         input_features=4, context_length=10, output_steps=10)
    net = build(config, seed=0)
    out_dim = 20
    expected = (
        lstm_param_count(4, 50) + lstm_param_count(50, 50)
        + dense_param_count(50, out_dim)          # secondary head
        + 2 * 60                                   # batchnorm scale/shift on merge width
        + dense_param_count(60, 50) + dense_param_count(50, 50)
        + dense_param_count(50, out_dim)          # output head
    )
    assert net.parameter_count() == expected


def test_vanilla_fewer_parameters():
    aux = build(ModelConfig(kind="aux", lstm_layers=2, dense_layers=2, nodes=50), seed=0)
    vanilla = build(ModelConfig(kind="vanilla", lstm_layers=2, nodes=50), seed=0)
    assert vanilla.parameter_count() < aux.parameter_count()


def test_context_free_aux_equals_vanilla_plus_secondary():
    # removing the context input and dense stack reproduces the vanilla
    # parameter count plus the secondary head
    aux = build(ModelConfig(kind="aux", lstm_layers=2, dense_layers=0, nodes=30,
                            context_length=0, output_steps=5), seed=0)
    vanilla = build(ModelConfig(kind="vanilla", lstm_layers=2, nodes=30, output_steps=5), seed=0)
    secondary = dense_param_count(30, 10)
    assert aux.parameter_count() == vanilla.parameter_count() + secondary


def test_output_head_dimension():
    net = build(ModelConfig(kind="aux", output_steps=7, input_features=2), seed=1)
    main, sec = net.forward(np.zeros((3, 10, 2)), np.zeros((3, 10)))
    assert main.shape == (3, 14)
    assert sec.shape == (3, 14)


def test_untrained_outputs_finite_and_bounded():
    net = build(ModelConfig(kind="aux", input_features=4), seed=2)
    rng = np.random.default_rng(0)
    main, sec = net.forward(rng.random((5, 10, 4)), rng.random((5, 10)))
    for out in (main, sec):
        assert np.all(np.isfinite(out.data))
        assert np.all((out.data > 0) & (out.data < 1))


def test_invalid_configs_rejected():
    with pytest.raises(BuildError):
        ModelConfig(kind="other")
    with pytest.raises(BuildError):
        ModelConfig(dropout=1.0)
    with pytest.raises(BuildError):
        ModelConfig(lstm_layers=0)


# -- loss and rmse -------------------------------------------------------------------


def test_loss_perfect_prediction_zero():
    targets = np.random.default_rng(0).random((3, 2, 2))
    masks = np.ones((3, 2), dtype=bool)
    flat, mask_flat = flatten_targets(targets, masks)
    loss = dual_loss(Tensor(flat), Tensor(flat), flat, mask_flat, lam=0.7)
    assert float(loss.data) == 0.0


def test_loss_secondary_weighting():
    targets = np.zeros((1, 1, 2))
    masks = np.ones((1, 1), dtype=bool)
    flat, mask_flat = flatten_targets(targets, masks)
    main = Tensor(flat)  # exact
    sec = Tensor(flat + 0.3)  # mse = 0.09
    loss = dual_loss(main, sec, flat, mask_flat, lam=0.2)
    assert float(loss.data) == pytest.approx(0.2 * 0.09)


def test_loss_hand_case():
    # 1 step, target (0.5, 0.5), prediction (0.7, 0.9): ((0.2)^2 + (0.4)^2)/2 = 0.10
    targets = np.array([[[0.5, 0.5]]])
    masks = np.ones((1, 1), dtype=bool)
    flat, mask_flat = flatten_targets(targets, masks)
    loss = dual_loss(Tensor(np.array([[0.7, 0.9]])), None, flat, mask_flat, lam=0.0)
    assert float(loss.data) == pytest.approx(0.10)


def test_loss_empty_mask():
    targets = np.zeros((1, 1, 2))
    masks = np.zeros((1, 1), dtype=bool)
    flat, mask_flat = flatten_targets(targets, masks)
    with pytest.raises(EmptyTargetError):
        dual_loss(Tensor(flat), None, flat, mask_flat, lam=0.0)


def test_rmse_examples():
    target = np.zeros((4, 6, 2))
    mask = np.ones((4, 6), dtype=bool)
    assert rmse(target, target, mask) == 0.0
    offset = target + np.array([0.3, 0.4])
    assert rmse(offset, target, mask) == pytest.approx(np.sqrt((0.09 + 0.16) / 2))
    assert rmse(offset, target, mask) == pytest.approx(0.35355, abs=1e-5)
    single_t = np.zeros((1, 1, 2))
    single_p = single_t.copy()
    single_p[0, 0, 0] = 0.5
    assert rmse(single_p, single_t, np.ones((1, 1), dtype=bool)) == pytest.approx(0.5 / np.sqrt(2))


def test_evaluate_covers_size_one_remainder_batches():
    train, val = small_dataset()
    net = build(ci_config(epochs=1), seed=12)
    train_model(net, train, val, seed=12)
    # a subset whose size leaves a 1-row remainder at the eval batch size
    odd = val.subset(np.arange(min(len(val), 5)))
    loss_a, rmse_a = evaluate(net, odd, batch_size=4)
    loss_b, rmse_b = evaluate(net, odd, batch_size=1024)
    assert loss_a == pytest.approx(loss_b, abs=1e-12)
    assert rmse_a == pytest.approx(rmse_b, abs=1e-12)


def test_rmse_permutation_invariant():
    rng = np.random.default_rng(4)
    pred = rng.random((10, 3, 2))
    target = rng.random((10, 3, 2))
    mask = rng.random((10, 3)) > 0.3
    mask[:, 0] = True
    base = rmse(pred, target, mask)
    perm = rng.permutation(10)
    assert rmse(pred[perm], target[perm], mask[perm]) == pytest.approx(base, abs=1e-12)


# -- full-network gradients -----------------------------------------------------------


def test_full_aux_network_gradients_match_finite_differences():
    config = ModelConfig(kind="aux", lstm_layers=2, dense_layers=1, nodes=6,
                         input_features=3, context_length=4, output_steps=2,
                         dropout=0.0, secondary_loss_weight=0.3)
    net = build(config, seed=5)
    rng = np.random.default_rng(8)
    inputs = rng.random((2, 5, 3))
    contexts = rng.random((2, 4))
    targets = rng.random((2, 2, 2))
    masks = np.ones((2, 2), dtype=bool)
    masks[1, 1] = False
    flat, mask_flat = flatten_targets(targets, masks)

    def build_loss():
        main, sec = net.forward(inputs, contexts, mode="train",
                                rng=np.random.default_rng(0))
        return dual_loss(main, sec, flat, mask_flat, config.secondary_loss_weight)

    report = check_gradients(build_loss, net.parameters())
    assert max(report.values()) < 1e-4


# -- training -------------------------------------------------------------------------


def small_dataset(seed=0, n_instances=14, variant="xyod"):
    rng = np.random.default_rng(seed)
    instances = [make_instance(f"i{k:03d}", n=int(rng.integers(24, 40))) for k in range(n_instances)]
    spec = WindowingSpec(mode="time", t1_s=1.0, t2_s=1.0, variant=variant)
    norm = fit_normalization(instances, variant)
    samples = build_sample_set(instances, spec, norm)
    cut = int(len(samples) * 0.8)
    return samples.subset(np.arange(cut)), samples.subset(np.arange(cut, len(samples)))


def ci_config(**overrides):
    defaults = dict(kind="aux", lstm_layers=1, dense_layers=1, nodes=12, dropout=0.0,
                    batch_size=32, epochs=8, input_features=4, context_length=10,
                    output_steps=10, learning_rate=1e-3)
    defaults.update(overrides)
    return ModelConfig(**defaults)


def test_training_learns_linear_task():
    train, val = small_dataset()
    net = build(ci_config(epochs=40), seed=1)
    history = train_model(net, train, val, seed=1)
    assert history.train_loss[-1] < 0.1 * history.train_loss[0]
    assert len(history.train_loss) == 40


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_training_loss_decreases_every_seed(seed):
    train, val = small_dataset()
    net = build(ci_config(epochs=8), seed=seed)
    history = train_model(net, train, val, seed=seed)
    assert history.train_loss[-1] < history.train_loss[0]


def test_training_deterministic():
    train, val = small_dataset()
    h1 = train_model(build(ci_config(epochs=3), seed=2), train, val, seed=9)
    h2 = train_model(build(ci_config(epochs=3), seed=2), train, val, seed=9)
    assert h1.train_loss == h2.train_loss
    assert h1.val_loss == h2.val_loss
    assert h1.val_rmse == h2.val_rmse


def test_secondary_loss_weight_changes_trajectory():
    train, val = small_dataset()
    nets = []
    for lam in (0.0, 0.2):
        net = build(ci_config(epochs=1, secondary_loss_weight=lam), seed=3)
        train_model(net, train, val, seed=3)
        nets.append(net)
    a = nets[0].parameters()["lstm0.wx"].data
    b = nets[1].parameters()["lstm0.wx"].data
    assert not np.allclose(a, b)


def test_best_epoch_checkpoint_restored():
    train, val = small_dataset()
    net = build(ci_config(epochs=6), seed=4)
    history = train_model(net, train, val, seed=4)
    assert history.best_epoch == int(np.argmin(history.val_loss)) + 1
    val_loss, _ = evaluate(net, val)
    assert val_loss == pytest.approx(min(history.val_loss), abs=1e-12)


def test_predictions_respect_normalization_bounds():
    train, val = small_dataset()
    net = build(ci_config(epochs=2), seed=5)
    train_model(net, train, val, seed=5)
    preds = predict(net, val)
    norm = train.norm
    for p, mask in zip(preds, val.masks):
        assert p.shape == (int(mask.sum()), 2)
        assert np.all(p[:, 0] >= norm.mins[0]) and np.all(p[:, 0] <= norm.maxs[0])
        assert np.all(p[:, 1] >= norm.mins[1]) and np.all(p[:, 1] <= norm.maxs[1])


def test_predict_without_norm_raises():
    net = build(ci_config(), seed=6)
    train, _ = small_dataset()
    with pytest.raises(StateError):
        predict(net, train)


def test_model_artifact_round_trip(tmp_path):
    train, val = small_dataset()
    net = build(ci_config(epochs=2), seed=7)
    train_model(net, train, val, seed=7)
    net.wspec = {"mode": "time", "t1_s": 1.0, "t2_s": 1.0, "p": 0.5,
                 "variant": "xyod", "stride_steps": 1}
    path = tmp_path / "model.bin"
    save_model(net, path)
    again = load_model(path)
    assert again.config == net.config
    l1, r1 = evaluate(net, val)
    l2, r2 = evaluate(again, val)
    assert l1 == pytest.approx(l2, abs=1e-15)
    assert r1 == pytest.approx(r2, abs=1e-15)
    # identical bytes when saved again
    path2 = tmp_path / "model2.bin"
    save_model(again, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_training_on_distance_based_masked_targets():
    rng = np.random.default_rng(2)
    instances = [make_instance(f"i{k:03d}", n=int(rng.integers(24, 46))) for k in range(14)]
    spec = WindowingSpec(mode="distance", p=0.5, variant="xyod")
    norm = fit_normalization(instances, "xyod")
    samples = build_sample_set(instances, spec, norm)
    assert not samples.masks.all()  # padding present
    cut = int(len(samples) * 0.8)
    train = samples.subset(np.arange(cut))
    val = samples.subset(np.arange(cut, len(samples)))
    config = ci_config(epochs=6, batch_size=4, output_steps=samples.targets.shape[1])
    net = build(config, seed=9)
    history = train_model(net, train, val, seed=9)
    assert np.isfinite(history.val_loss).all()
    assert history.train_loss[-1] < history.train_loss[0]
    preds = predict(net, val)
    for p, mask in zip(preds, val.masks):
        assert p.shape == (int(mask.sum()), 2)


def test_vanilla_ignores_context():
    train, val = small_dataset()
    net = build(ci_config(kind="vanilla", dense_layers=0), seed=8)
    rng = np.random.default_rng(0)
    c1 = rng.random((4, 10))
    main1, sec1 = net.forward(train.inputs[:4], c1)
    main2, sec2 = net.forward(train.inputs[:4], np.zeros((4, 10)))
    assert sec1 is None and sec2 is None
    assert np.array_equal(main1.data, main2.data)
