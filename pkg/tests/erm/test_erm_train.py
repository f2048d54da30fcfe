from dataclasses import replace

import numpy as np
import pytest

import agro
from agro import erm, network
from agro.errors import ConfigurationError
from agro.synth import TrainingView


def separable_view(n=200, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    centers = np.where(labels[:, None] == 1, 3.0, -3.0)
    inputs = centers + rng.standard_normal((n, 2))
    return TrainingView(inputs, labels, np.zeros(n), 2)


def test_train_erm_fits_separable_data():
    view = separable_view()

    result = erm.train_erm(
        view,
        agro.NetSpec((8,)),
        agro.TrainConfig(epochs=20, batch_size=32, lr=0.1),
    )
    predictions = network.predict(result.params, view.inputs)
    accuracy = np.mean(predictions == view.labels)

    assert accuracy >= 0.99
    assert len(result.checkpoints) == 20
    assert result.checkpoints[-1] == result.params
    assert result.epoch_losses[-1] < result.epoch_losses[0]


def test_train_erm_zero_epochs_returns_init():
    view = separable_view()
    spec = agro.NetSpec((8,))

    result = erm.train_erm(view, spec, agro.TrainConfig(epochs=0, seed=4))

    assert result.params == network.init_network(spec.layer_sizes(2, 2), 4)
    assert result.checkpoints == []
    assert result.epoch_losses == []


def test_train_erm_deterministic():
    view = separable_view()
    config = agro.TrainConfig(epochs=3, batch_size=16, seed=2)

    a = erm.train_erm(view, agro.NetSpec((4,)), config)
    b = erm.train_erm(view, agro.NetSpec((4,)), config)
    c = erm.train_erm(view, agro.NetSpec((4,)), replace(config, seed=3))

    assert a.params == b.params
    assert a.params != c.params


def test_train_erm_from_init_params():
    view = separable_view()
    start = network.init_network([2, 4, 2], seed=9)

    result = erm.train_erm(
        view, agro.NetSpec((4,)), agro.TrainConfig(epochs=0), start
    )

    assert result.params == start


def test_train_erm_empty_view():
    view = TrainingView(np.zeros((0, 2)), [], [], 2)

    with pytest.raises(ConfigurationError):
        erm.train_erm(view, agro.NetSpec(), agro.TrainConfig())


@pytest.mark.parametrize(
    "changes", [{"epochs": -1}, {"batch_size": 0}, {"lr": 0.0}]
)
def test_train_config_invalid(changes):
    with pytest.raises(ConfigurationError):
        agro.TrainConfig(**changes).validate()
