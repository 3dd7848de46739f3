"""Tests for layers, gradient checking, the optimizer and checkpoints."""

from dataclasses import replace

import numpy as np
import pytest

from src.errors import CheckpointError, ShapeMismatchError
from src.models import InitScheme, desk_spec, init_weights
from src.nn.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from src.nn.gradcheck import grad_check
from src.nn.layers import (
    Conv2D,
    Flatten,
    FullyConnected,
    Layer,
    MaxPool,
    ReLU,
    Softplus,
)
from src.nn.loss import mse_loss
from src.nn.network import Network
from src.nn.optimizer import (
    OptimizerConfig,
    SGDMomentum,
    learning_rate,
    sgd_step,
)


def _randomize(network: Network, rng: np.random.Generator, scale: float = 0.5) -> None:
    for _, layer, key in network.parameters():
        layer.params[key] = rng.normal(0.0, scale, layer.params[key].shape)
    network.zero_grad()


def _checked_network(layers: list[Layer], input_shape, rng) -> Network:
    network = Network(layers, input_shape)
    _randomize(network, rng)
    return network


def test_conv2d_output_shape_stride_and_padding():
    conv = Conv2D("conv", 3, 5, kernel=3, stride=2, pad=1)

    assert conv.output_shape((3, 7, 6)) == (5, 4, 3)


def test_conv2d_single_filter_matches_manual_correlation():
    conv = Conv2D("conv", 1, 1, kernel=2)
    conv.params["weight"] = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    conv.params["bias"] = np.array([0.5])
    x = np.arange(9, dtype=float).reshape(1, 1, 3, 3)

    out = conv.forward(x)

    assert out[0, 0, 0, 0] == 0 * 1 + 1 * 2 + 3 * 3 + 4 * 4 + 0.5
    assert out.shape == (1, 1, 2, 2)


def test_conv2d_wrong_channel_count_raises_shape_mismatch_error():
    with pytest.raises(ShapeMismatchError):
        Conv2D("conv", 4, 2, kernel=3).forward(np.zeros((1, 3, 5, 5)))


def test_maxpool_forward_picks_window_maximum():
    x = np.array([[[[1.0, 5.0, 2.0, 0.0], [3.0, 4.0, 7.0, 1.0]]]])

    out = MaxPool("pool", 2).forward(x)

    np.testing.assert_array_equal(out, [[[[5.0, 7.0]]]])


def test_softplus_output_strictly_positive_for_large_negative_input():
    out = Softplus("guard").forward(np.array([[-1000.0, 0.0, 1000.0]]))

    assert np.all(out > 0)
    assert out[0, 1] == pytest.approx(np.log(2.0) + 1e-6)
    assert out[0, 2] == pytest.approx(1000.0)


def test_relu_backward_passes_gradient_only_where_input_positive():
    relu = ReLU("relu")
    relu.forward(np.array([[-1.0, 0.0, 2.0]]))

    grad = relu.backward(np.ones((1, 3)))

    np.testing.assert_array_equal(grad, [[0.0, 0.0, 1.0]])


def test_backward_before_forward_raises_runtime_error():
    with pytest.raises(RuntimeError):
        FullyConnected("fc", 2, 2).backward(np.zeros((1, 2)))


def test_mse_loss_gradient_is_scaled_difference():
    pred = np.array([[1.0, 2.0]])
    target = np.array([[0.0, 0.0]])

    loss, grad = mse_loss(pred, target)

    assert loss == pytest.approx(2.5)
    np.testing.assert_allclose(grad, [[1.0, 2.0]])


def test_grad_check_conv_with_stride_and_padding_passes(rng):
    network = _checked_network(
        [
            Conv2D("conv", 2, 3, kernel=3, stride=2, pad=1),
            Flatten("flatten"),
            FullyConnected("fc", 27, 4),
        ],
        (2, 5, 5),
        rng,
    )
    x = rng.normal(size=(2, 2, 5, 5))
    target = rng.normal(size=(2, 4))

    report = grad_check(network, x, target)

    assert report.passed, report.per_param


def test_grad_check_relu_and_maxpool_passes(rng):
    network = _checked_network(
        [
            Conv2D("conv", 1, 2, kernel=3, pad=1),
            ReLU("relu"),
            MaxPool("pool", 2, 2),
            Flatten("flatten"),
            FullyConnected("fc", 8, 3),
        ],
        (1, 4, 4),
        rng,
    )
    x = rng.normal(size=(3, 1, 4, 4))
    target = rng.normal(size=(3, 3))

    report = grad_check(network, x, target)

    assert report.passed, report.per_param


def test_grad_check_fully_connected_and_softplus_passes(rng):
    network = _checked_network(
        [
            FullyConnected("fc1", 5, 6),
            ReLU("relu"),
            FullyConnected("fc2", 6, 4),
            Softplus("guard"),
        ],
        (5,),
        rng,
    )
    x = rng.normal(size=(4, 5))
    target = rng.uniform(0.5, 1.5, size=(4, 4))

    report = grad_check(network, x, target)

    assert report.passed, report.per_param
    assert report.checked == sum(p.size for p in network.state_dict().values())


class _DoubledBackward(Layer):
    """Identity whose backward wrongly doubles the incoming gradient."""

    def forward(self, x):
        return x

    def backward(self, grad_out):
        return 2 * grad_out

    def output_shape(self, input_shape):
        return input_shape


def test_grad_check_corrupted_backward_fails(rng):
    network = _checked_network(
        [FullyConnected("fc", 3, 2), _DoubledBackward("double")], (3,), rng
    )
    x = rng.normal(size=(4, 3))
    target = rng.normal(size=(4, 2))

    report = grad_check(network, x, target)

    assert not report.passed
    assert report.per_param["fc.weight"] > 0.1


def test_grad_check_single_linear_layer_within_1e9(rng):
    network = _checked_network([FullyConnected("fc", 4, 3)], (4,), rng)
    x = rng.normal(size=(5, 4))
    target = rng.normal(size=(5, 3))

    report = grad_check(network, x, target, epsilon=1e-3, tolerance=1e-9)

    assert report.passed, report.per_param


def test_grad_check_semantic_desk_network_sampled_entries_passes(rng):
    spec = replace(desk_spec(), input_size=16, init_scheme=InitScheme.HE)
    network = init_weights(spec, np.random.default_rng(2))
    x = rng.normal(size=(1, 4, 16, 16))
    target = rng.uniform(0.8, 1.2, size=(1, 4))

    report = grad_check(network, x, target, max_entries_per_param=2, rng=rng)

    assert report.passed, report.per_param


def test_grad_check_restores_parameters(rng, tiny_network):
    before = tiny_network.state_dict()
    x = rng.normal(size=(1, 4, 8, 8))

    grad_check(tiny_network, x, np.ones((1, 4)), max_entries_per_param=2, rng=rng)

    for name, value in tiny_network.state_dict().items():
        np.testing.assert_array_equal(value, before[name])


@pytest.mark.parametrize(
    ("epoch", "new_layer", "expected"),
    [
        (0, False, 1e-5),
        (10, False, 1e-6),
        (20, False, 1e-7),
        (0, True, 5e-4),
        (10, True, 5e-5),
        (20, True, 5e-6),
    ],
)
def test_learning_rate_step_decay_schedule(epoch, new_layer, expected):
    assert learning_rate(OptimizerConfig(), epoch, new_layer) == pytest.approx(expected)


def test_learning_rate_within_decay_period_constant():
    config = OptimizerConfig()

    assert learning_rate(config, 9) == learning_rate(config, 0)


def test_sgd_step_momentum_accumulates_velocity():
    config = OptimizerConfig(momentum=0.9, base_lr=0.1)
    w = np.array([1.0])
    v = np.zeros(1)

    sgd_step(w, np.array([2.0]), v, config, epoch=0)
    assert v[0] == pytest.approx(-0.2)
    assert w[0] == pytest.approx(0.8)

    sgd_step(w, np.array([2.0]), v, config, epoch=0)
    assert v[0] == pytest.approx(-0.38)
    assert w[0] == pytest.approx(0.42)


def test_sgd_step_zero_momentum_is_plain_gradient_descent():
    config = OptimizerConfig(momentum=0.0, base_lr=0.1)
    w = np.array([1.0, -2.0])
    v = np.zeros(2)

    for _ in range(3):
        sgd_step(w, np.array([2.0, -1.0]), v, config, epoch=0)

    np.testing.assert_allclose(w, [1.0 - 3 * 0.2, -2.0 + 3 * 0.1])
    np.testing.assert_allclose(v, [-0.2, 0.1])


def test_sgd_momentum_new_layer_uses_multiplied_rate():
    old = FullyConnected("old", 1, 1)
    new = FullyConnected("new", 1, 1, new_layer=True)
    network = Network([old, new], (1,))
    for layer in (old, new):
        layer.grads["weight"] = np.ones((1, 1))
        layer.grads["bias"] = np.zeros(1)
    optimizer = SGDMomentum(network, OptimizerConfig(base_lr=1e-3))

    optimizer.step(epoch=0)

    assert old.params["weight"][0, 0] == pytest.approx(-1e-3)
    assert new.params["weight"][0, 0] == pytest.approx(-5e-2)


def test_network_load_state_dict_wrong_shape_raises_checkpoint_error(tiny_network):
    state = tiny_network.state_dict()
    state["fc9.bias"] = np.zeros(5)

    with pytest.raises(CheckpointError):
        tiny_network.load_state_dict(state)


def test_save_checkpoint_then_load_checkpoint_same_tensors(tmp_path, tiny_network):
    velocity = {k: np.full_like(v, 0.25) for k, v in tiny_network.state_dict().items()}
    checkpoint = Checkpoint(
        params=tiny_network.state_dict(),
        velocity=velocity,
        epoch=3,
        meta={"history": [1.0, 0.5, 0.25]},
    )

    loaded = load_checkpoint(save_checkpoint(checkpoint, tmp_path / "cp.npz"))

    assert loaded.epoch == 3
    assert loaded.meta == {"history": [1.0, 0.5, 0.25]}
    for name, value in checkpoint.params.items():
        np.testing.assert_array_equal(loaded.params[name], value)
        np.testing.assert_array_equal(loaded.velocity[name], velocity[name])


def test_load_checkpoint_other_version_raises_checkpoint_error(tmp_path):
    path = save_checkpoint(
        Checkpoint(params={"w": np.zeros(2)}, meta={"version": "0.9"}),
        tmp_path / "old.npz",
    )

    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_load_checkpoint_not_an_archive_raises_checkpoint_error(tmp_path):
    path = tmp_path / "junk.npz"
    path.write_bytes(b"not a zip file")

    with pytest.raises(CheckpointError):
        load_checkpoint(path)
