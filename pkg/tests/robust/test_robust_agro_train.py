from dataclasses import replace

import pytest

import agro
from agro import robust
from agro.errors import ConfigurationError

from tests.resources.fixtures import view


def train(view, **changes):
    config = replace(
        agro.AgroConfig(T1_epochs=1, T2_epochs=1, seed=0), **changes
    )
    return robust.agro_train(
        view,
        agro.NetSpec((8,)),
        config,
        erm_config=agro.TrainConfig(epochs=2, batch_size=32),
        slice_config=agro.SliceConfig(max_iters=10),
        grouper_config=agro.GrouperConfig(hidden=8, epochs=2, batch_size=64),
        kfold=3,
        analog=agro.PretrainedAnalog(view.input_dim, dim=4),
    )


def test_agro_train_runs_every_stage(view):
    result = train(view)

    assert result.grouper.m == 4
    assert result.pretrained_grouper.m == 4
    assert result.slice_model.k == 4
    assert len(result.features) == len(view)
    assert len(result.round0.checkpoints) == 1
    assert len(result.adversary) == 1
    assert len(result.checkpoints) == 2
    assert result.checkpoints[-1] == result.theta
    assert {row[2] for row in result.trace.rows} == {"primary", "adversary"}


def test_agro_train_deterministic(view):
    a = train(view)
    b = train(view)

    assert a.theta == b.theta
    assert a.grouper == b.grouper
    assert a.trace.rows == b.trace.rows


def test_agro_train_interleaved(view):
    result = train(view, schedule="interleaved")

    assert len(result.checkpoints) == 2
    assert len(result.adversary) == 1
    assert len(result.adversary[0].step_losses) == 2 * 5


def test_agro_train_two_rounds(view):
    result = train(view, rounds=2)

    assert len(result.adversary) == 2
    assert {row[1] for row in result.trace.rows} == {0, 1, 2}


def test_agro_train_reuses_given_inputs(view):
    first = train(view)

    second = robust.agro_train(
        view,
        agro.NetSpec((8,)),
        agro.AgroConfig(T1_epochs=1, T2_epochs=1),
        erm_config=agro.TrainConfig(epochs=2, batch_size=32),
        grouper_config=agro.GrouperConfig(hidden=8, epochs=2, batch_size=64),
        features=first.features,
        pretrained_grouper=first.pretrained_grouper,
    )

    assert second.theta == first.theta
    assert second.slice_model is None


def test_agro_train_group_count_mismatch(view):
    first = train(view)

    with pytest.raises(ConfigurationError):
        robust.agro_train(
            view,
            agro.NetSpec((8,)),
            agro.AgroConfig(m=3, T1_epochs=1),
            erm_config=agro.TrainConfig(epochs=2, batch_size=32),
            features=first.features,
            pretrained_grouper=first.pretrained_grouper,
        )


def test_agro_train_extracts_features_once_across_rounds(view, monkeypatch):
    calls = []
    extract = agro.erm.extract_features_kfold

    def counting(*args, **kwargs):
        calls.append(args)
        return extract(*args, **kwargs)

    monkeypatch.setattr(agro.erm, "extract_features_kfold", counting)

    result = train(view, rounds=3)

    assert len(calls) == 1
    assert len(result.adversary) == 3
    assert all(
        phase.transitions[0].sum() == len(result.features)
        for phase in result.adversary
    )
