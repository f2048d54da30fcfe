import numpy as np
import pytest

import agro
from agro import network

from tests.resources.fixtures import net, batch


def clear_of_kinks(params, inputs, margin=1e-3):
    pre_activations, _ = network._forward_trace(params, inputs)
    return all(np.all(np.abs(z) > margin) for z in pre_activations[:-1])


def test_backward_matches_finite_differences():
    checked = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        params = network.init_network([4, 6, 5, 3], seed=seed)
        batch = agro.Batch(
            rng.standard_normal((8, 4)), rng.integers(0, 3, 8), rng.random(8)
        )
        if not clear_of_kinks(params, batch.inputs):
            continue
        analytic = network.backward(params, batch)
        numeric = network.finite_diff_grad(params, batch, epsilon=1e-4)

        assert network.relative_error(analytic, numeric) < 1e-3
        checked += 1
    assert checked >= 25


def test_backward_two_layer_small_batch():
    rng = np.random.default_rng(0)
    params = network.init_network([2, 3, 2], seed=0)
    batch = agro.Batch(rng.standard_normal((3, 2)), [0, 1, 1])
    if not clear_of_kinks(params, batch.inputs):
        pytest.skip("pre-activation too close to the ReLU kink")

    analytic = network.backward(params, batch)
    numeric = network.finite_diff_grad(params, batch, epsilon=1e-4)

    assert network.relative_error(analytic, numeric) < 1e-4


def test_backward_zero_weights_zero_gradient(net, batch):
    zero = agro.Batch(batch.inputs, batch.labels, np.zeros(len(batch)))

    grads = network.backward(net, zero)

    assert np.all(grads.flatten() == 0)


def test_backward_from_logits_agrees_with_backward(net, batch):
    logits, _ = network.forward(net, batch.inputs)
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    dlogits = probs - np.eye(3)[batch.labels]
    dlogits *= batch.example_weights[:, None]

    a = network.backward_from_logits(net, batch.inputs, dlogits)
    b = network.backward(net, batch)

    assert np.allclose(a.flatten(), b.flatten(), atol=1e-12)


def test_finite_diff_with_custom_objective(net):
    def objective(params):
        return float(np.sum(params.flatten() ** 2))

    estimate = network.finite_diff_grad(net, None, objective=objective)

    assert np.allclose(estimate.flatten(), 2 * net.flatten(), atol=1e-6)


def test_relative_error_ignores_tiny_coordinates(net):
    a = agro.GradientSet.from_flat(net.layer_sizes, np.zeros(net.n_params))
    b = agro.GradientSet.from_flat(
        net.layer_sizes, np.full(net.n_params, 1e-9)
    )

    assert network.relative_error(a, b) == 0.0
