import numpy as np
import pytest

from agro import grouper as grouper_module
from agro import network

from tests.resources.fixtures import features, grouper


def soft_objective(g, matrix, losses, q):
    P = grouper_module.group_probs(g, matrix)
    return float(np.sum(P * np.outer(losses, q)) / matrix.shape[0])


def test_objective_value(grouper, features):
    matrix = features.matrix[:10]
    losses = np.linspace(0.1, 2.0, 10)
    q = np.array([0.2, 1.0, 1.0])

    value, _ = grouper_module.soft_group_objective(grouper, matrix, losses, q)

    assert np.isclose(
        value, soft_objective(grouper, matrix, losses, q), atol=1e-14
    )


def test_objective_gradient_matches_finite_differences(features):
    matrix = features.matrix[:8]
    losses = np.random.default_rng(0).random(8)
    q = np.array([0.2, 1.0, 1.0])
    checked = 0
    for seed in range(10):
        g = grouper_module.init_grouper(
            features.dim, 3, hidden=5, seed=seed, features=features
        )
        pre_activations, _ = network._forward_trace(
            g.params, g.standardize(matrix)
        )
        if not np.all(np.abs(pre_activations[0]) > 1e-3):
            continue

        def objective(params):
            return soft_objective(g.with_params(params), matrix, losses, q)

        _, analytic = grouper_module.soft_group_objective(g, matrix, losses, q)
        numeric = network.finite_diff_grad(g.params, None, objective=objective)

        assert network.relative_error(analytic, numeric) < 1e-3
        checked += 1
    assert checked >= 1


def test_ascent_step_raises_objective(grouper, features):
    matrix = features.matrix[:20]
    losses = np.linspace(0.0, 3.0, 20)
    q = np.array([0.2, 1.0, 1.0])

    before, grads = grouper_module.soft_group_objective(
        grouper, matrix, losses, q
    )
    stepped = grouper.with_params(
        network.sgd_step(grouper.params, grads, 1e-3, direction="ascend")
    )
    after, _ = grouper_module.soft_group_objective(stepped, matrix, losses, q)

    assert after >= before


def test_single_group_has_no_gradient(features):
    single = grouper_module.init_grouper(
        features.dim, 1, hidden=4, features=features
    )
    losses = np.linspace(0.0, 1.0, len(features))

    value, grads = grouper_module.soft_group_objective(
        single, features.matrix, losses, np.array([0.5])
    )

    assert value == pytest.approx(0.5 * losses.mean())
    assert np.max(np.abs(grads.flatten())) <= 1e-10
