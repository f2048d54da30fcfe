import numpy as np
import pytest

import agro
from agro import grouper as grouper_module
from agro import network
from agro.errors import ConfigurationError, ShapeError

from tests.resources.fixtures import features, grouper


def test_group_probs_on_simplex(grouper, features):
    P = grouper_module.group_probs(grouper, features)

    assert P.shape == (len(features), 3)
    assert np.all(P >= 0)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-6)
    assert np.allclose(grouper_module.group_shares(P).sum(), 1.0)


def test_single_group_takes_everything(features):
    single = grouper_module.init_grouper(features.dim, 1, hidden=4)

    P = grouper_module.group_probs(single, features)

    assert np.all(P == 1.0)
    assert grouper_module.assignment_entropy(P) == 0.0


def test_init_grouper_standardizes(features):
    g = grouper_module.init_grouper(features.dim, 2, features=features)
    standardized = g.standardize(features)

    assert np.allclose(standardized.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(standardized.std(axis=0), 1.0)


def test_init_grouper_constant_feature_keeps_scale():
    matrix = np.column_stack([np.ones(10), np.arange(10.0)])

    g = grouper_module.init_grouper(2, 2, features=matrix)

    assert g.feature_scale[0] == 1.0
    assert np.all(np.isfinite(g.standardize(matrix)))


def test_init_grouper_invalid(features):
    with pytest.raises(ConfigurationError):
        grouper_module.init_grouper(features.dim, 0)
    with pytest.raises(ShapeError):
        grouper_module.init_grouper(4, 2, features=features)


def test_standardize_wrong_dim(grouper):
    with pytest.raises(ShapeError):
        grouper.standardize(np.ones((3, 2)))


def test_entropy_of_uniform_assignment():
    P = np.full((5, 4), 0.25)

    assert grouper_module.assignment_entropy(P) == pytest.approx(np.log(4))


def test_grouper_save_and_load(tmp_path, grouper):
    grouper.save(tmp_path / "grouper", extra={"kl_final": 0.5})

    loaded = agro.Grouper.from_file(tmp_path / "grouper")
    manifest = agro.storage.read_manifest(tmp_path / "grouper.manifest")

    assert loaded == grouper
    assert manifest["role"] == "grouper"
    assert manifest["m"] == "3"


def test_grouper_from_task_checkpoint(tmp_path):
    network.init_network([2, 2], seed=0).save(tmp_path / "theta")

    with pytest.raises(ConfigurationError):
        agro.Grouper.from_file(tmp_path / "theta")


def test_loss_separation_follows_the_losses():
    losses = np.array([0.1, 0.1, 0.1, 2.0, 2.0, 2.0])
    aligned = np.eye(2)[[0, 0, 0, 1, 1, 1]]
    mixed = np.eye(2)[[0, 1, 0, 1, 0, 1]]

    assert grouper_module.loss_separation(aligned, losses) == pytest.approx(
        1.0
    )
    assert grouper_module.loss_separation(mixed, losses) < 0.2
    assert grouper_module.loss_separation(
        np.full((6, 2), 0.5), losses
    ) == pytest.approx(0.0)


def test_loss_separation_of_constant_losses_is_zero():
    P = np.eye(3)[[0, 1, 2, 0]]

    assert grouper_module.loss_separation(P, np.ones(4)) == 0.0


def test_loss_separation_checks_shapes():
    with pytest.raises(ShapeError):
        grouper_module.loss_separation(np.ones((3, 2)) / 2, np.ones(4))
