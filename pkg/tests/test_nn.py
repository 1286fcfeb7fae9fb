import numpy as np
import pytest

from cimnas.nn import (Conv, FullyConnected, NoiseSpec, Output, ShapeError, TrainConfig, TrainingError,
                       build_network, evaluate_accuracy, forward, loss_and_grads, sample_deltas, shape_trace,
                       train, train_step)
from cimnas.quant import QuantizationScheme

from oracles import numeric_grad

SMALL = [Conv(3, 3, 4, pool=True), FullyConnected(6), Output(3)]


def test_shape_trace_examples():
    trace = shape_trace([Conv(3, 3, 8, True), Conv(3, 1, 4), FullyConnected(10), Output(4)], (1, 8, 8))
    assert [out for _, out in trace] == [(8, 4, 4), (4, 4, 4), (10,), (4,)]


@pytest.mark.parametrize("layers,bad", [
    ([Conv(3, 3, 4, True), Conv(3, 3, 4, True), Output(2)], 1),
    ([Conv(1, 1, 4, True), Conv(1, 1, 4, True), Conv(1, 1, 4, True), Output(2)], 2),
    ([FullyConnected(4), Conv(1, 1, 2), Output(2)], 1),
    ([Output(2), Output(2)], 0),
    ([Conv(3, 3, 2)], 1),
])
def test_shape_errors_name_the_layer(layers, bad):
    with pytest.raises(ShapeError) as info:
        shape_trace(layers, (1, 4, 4))
    assert info.value.layer == bad


def test_even_filter_rejected():
    with pytest.raises(ValueError):
        Conv(2, 3, 4)


def test_build_is_seeded_and_crossbar_shaped():
    a = build_network(SMALL, (2, 6, 6), 5)
    b = build_network(SMALL, (2, 6, 6), 5)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    assert [w.shape for w in a.weights] == [(18, 4), (36, 6), (6, 3)]
    assert forward(a, np.zeros((7, 2, 6, 6))).shape == (7, 3)


def test_batch_shape_checked():
    net = build_network(SMALL, (2, 6, 6), 0)
    with pytest.raises(ShapeError):
        forward(net, np.zeros((1, 2, 5, 5)))


def test_gradients_match_finite_differences(rng):
    net = build_network([Conv(3, 3, 3, True), Conv(1, 3, 2), FullyConnected(5), Output(3)], (2, 6, 6), 1)
    x = rng.normal(size=(4, 2, 6, 6))
    y = np.array([0, 1, 2, 1])
    deltas = [rng.normal(0, 0.05, size=w.shape) for w in net.weights]
    _, dws, dbs = loss_and_grads(net, x, y, None, deltas)
    for i in range(len(net.weights)):
        num_w = numeric_grad(lambda: loss_and_grads(net, x, y, None, deltas)[0], net.weights[i])
        num_b = numeric_grad(lambda: loss_and_grads(net, x, y, None, deltas)[0], net.biases[i])
        assert np.allclose(dws[i], num_w, rtol=1e-4, atol=1e-7)
        assert np.allclose(dbs[i], num_b, rtol=1e-4, atol=1e-7)


def test_ste_blocks_saturated_weights(rng):
    net = build_network(SMALL, (1, 6, 6), 0)
    net.weights[0][0, 0] = 5.0
    quant = QuantizationScheme.uniform(3, "s0.4", "u1.4")
    _, dws, _ = loss_and_grads(net, rng.random((3, 1, 6, 6)), np.array([0, 1, 2]), quant)
    assert dws[0][0, 0] == 0.0
    assert np.any(dws[0] != 0.0)


def test_noise_changes_outputs_only_through_weights(rng):
    net = build_network(SMALL, (1, 6, 6), 0)
    x = rng.random((5, 1, 6, 6))
    noise = NoiseSpec((0.1, 0.1, 0.1))
    noisy = forward(net, x, noise=noise, rng=np.random.default_rng(0))
    assert not np.allclose(noisy, forward(net, x))
    deltas = sample_deltas(net, noise, np.random.default_rng(0))
    assert np.allclose(noisy, forward(net.perturbed(deltas), x))
    assert sample_deltas(net, NoiseSpec((0.0, 0.0, 0.0)), rng) is None
    assert sample_deltas(net, NoiseSpec((0.1,) * 3, enabled=False), rng) is None


def test_train_returns_copy_and_learns(toy_data):
    net = build_network([Conv(3, 3, 8, True), Output(4)], (1, 8, 8), 0)
    before = [w.copy() for w in net.weights]
    trained, acc = train(net, toy_data, TrainConfig(epochs=10, rng_seed=0))
    assert all(np.array_equal(a, b) for a, b in zip(before, net.weights))
    assert acc > 0.9
    again, acc2 = train(net, toy_data, TrainConfig(epochs=10, rng_seed=0))
    assert acc2 == acc and np.array_equal(again.weights[0], trained.weights[0])


def test_noise_aware_training_is_reproducible(toy_data):
    net = build_network([Conv(3, 3, 4, True), Output(4)], (1, 8, 8), 0)
    noise = NoiseSpec((0.1, 0.1))
    quant = QuantizationScheme.uniform(2, "s1.4", "u1.4")
    a, _ = train(net, toy_data, TrainConfig(epochs=2, rng_seed=3), quant, noise)
    b, _ = train(net, toy_data, TrainConfig(epochs=2, rng_seed=3), quant, noise)
    c, _ = train(net, toy_data, TrainConfig(epochs=2, rng_seed=3), quant, NoiseSpec((0.1, 0.1), resample_per_batch=False))
    assert np.array_equal(a.weights[0], b.weights[0])
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_evaluate_accuracy_trials(toy_data):
    net, _ = train(build_network([Conv(3, 3, 8, True), Output(4)], (1, 8, 8), 0), toy_data, TrainConfig(epochs=5))
    clean = evaluate_accuracy(net, toy_data)
    assert evaluate_accuracy(net, toy_data, noise=NoiseSpec((0.0, 0.0)), n_trials=5) == clean
    noisy = evaluate_accuracy(net, toy_data, noise=NoiseSpec((2.0, 2.0)), n_trials=5, rng=np.random.default_rng(0))
    assert noisy < clean
    with pytest.raises(ValueError):
        evaluate_accuracy(net, toy_data, n_trials=0)
    with pytest.raises(ValueError):
        evaluate_accuracy(net, toy_data, noise=NoiseSpec((0.1, 0.1)), n_trials=2)


def test_non_finite_loss_raises(rng):
    net = build_network(SMALL, (1, 6, 6), 0)
    net.weights[-1][:] = np.inf
    with pytest.raises(TrainingError), np.errstate(invalid="ignore"):
        train_step(net, rng.random((2, 1, 6, 6)), np.array([0, 1]), TrainConfig())
