import numpy as np
import pytest

import agro
from agro import evaluation, network, synth
from agro.errors import ConfigurationError, ShapeError


def predictor(weights, bias):
    return agro.NetworkParams(
        [2, 2], [np.asarray(weights, dtype=float)], [np.asarray(bias)]
    )


IDENTITY = predictor(np.eye(2), [0.0, 0.0])
ALWAYS_ZERO = predictor(np.zeros((2, 2)), [1.0, 0.0])
ALWAYS_ONE = predictor(np.zeros((2, 2)), [0.0, 1.0])
# group 0 is four examples of class 1, group 1 six of class 0
LABELS = np.array([1] * 4 + [0] * 6)
GROUPS = np.array([0] * 4 + [1] * 6)
ORACLE_GROUPER = agro.Grouper(predictor(np.eye(2), [0.0, 0.0]))


@pytest.fixture
def dev_split():
    return agro.Split(
        "dev", np.eye(2)[LABELS], LABELS, GROUPS, np.zeros(10, int), 2, 3
    )


def group_features(n_checkpoints, groups=GROUPS):
    return [np.eye(2)[groups] for _ in range(n_checkpoints)]


def test_selection_score_example():
    groups = np.array([0] * 30 + [1] * 70)
    labels = np.zeros(100, dtype=int)
    predictions_a = np.ones(100, dtype=int)
    predictions_a[:6] = 0
    predictions_a[30:93] = 0
    predictions_b = np.ones(100, dtype=int)
    predictions_b[:18] = 0
    predictions_b[30:79] = 0

    score_a, chosen_a = evaluation.selection_score(
        predictions_a, labels, groups, 0.3
    )
    score_b, chosen_b = evaluation.selection_score(
        predictions_b, labels, groups, 0.3
    )

    assert score_a == pytest.approx(0.2)
    assert score_b == pytest.approx(0.6)
    assert chosen_a == chosen_b == [0]


def test_selection_score_full_alpha_is_accuracy():
    rng = np.random.default_rng(4)
    predictions = rng.integers(0, 2, 50)
    labels = rng.integers(0, 2, 50)
    groups = rng.integers(0, 5, 50)

    score, chosen = evaluation.selection_score(
        predictions, labels, groups, 1.0
    )

    assert score == pytest.approx(np.mean(predictions == labels))
    assert sorted(chosen) == np.unique(groups).tolist()


def test_selection_score_never_above_accuracy():
    rng = np.random.default_rng(5)
    for _ in range(20):
        predictions = rng.integers(0, 3, 40)
        labels = rng.integers(0, 3, 40)
        groups = rng.integers(0, 4, 40)
        for alpha in (0.1, 0.3, 0.7):
            score, _ = evaluation.selection_score(
                predictions, labels, groups, alpha
            )
            assert score <= np.mean(predictions == labels) + 1e-12


def test_selection_score_ties_take_smaller_group():
    _, chosen = evaluation.selection_score(
        [0, 0, 1, 1], [0, 0, 0, 0], [3, 3, 1, 1], 0.5
    )
    _, tied = evaluation.selection_score(
        [0, 1, 0, 1], [0, 0, 0, 0], [3, 3, 1, 1], 0.5
    )

    assert chosen == [1]
    assert tied == [1]


def test_selection_score_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        evaluation.selection_score([0], [0], [0], 0.0)
    with pytest.raises(ShapeError):
        evaluation.selection_score([0, 1], [0], [0], 0.5)


def test_predicted_mode_prefers_better_worst_group(dev_split):
    checkpoints = [ALWAYS_ZERO, IDENTITY, ALWAYS_ONE]

    best, scores = evaluation.select_checkpoint(
        checkpoints, ORACLE_GROUPER, group_features(3), dev_split, 0.4
    )

    assert best == 1
    assert scores == [0.0, 1.0, 0.0]


def test_ties_go_to_earliest_checkpoint(dev_split):
    best, scores = evaluation.select_checkpoint(
        [ALWAYS_ONE, ALWAYS_ZERO],
        ORACLE_GROUPER,
        group_features(2),
        dev_split,
        0.4,
    )

    assert scores == [0.0, 0.0]
    assert best == 0


def test_single_predicted_group_scores_average(dev_split):
    features = group_features(2, np.zeros(10, dtype=int))

    _, scores = evaluation.select_checkpoint(
        [ALWAYS_ZERO, ALWAYS_ONE], ORACLE_GROUPER, features, dev_split, 0.4
    )

    assert scores == pytest.approx([0.6, 0.4])


def test_average_mode(dev_split):
    best, scores = evaluation.select_checkpoint(
        [ALWAYS_ONE, ALWAYS_ZERO], None, None, dev_split, 0.4,
        mode="average",
    )

    assert best == 1
    assert scores == pytest.approx([0.4, 0.6])


def test_known_group_mode(dev_split):
    checkpoints = [ALWAYS_ZERO, ALWAYS_ONE]

    best_0, _ = evaluation.select_checkpoint(
        checkpoints, None, None, dev_split, 0.4,
        mode="known_group", known_group=0,
    )
    best_1, _ = evaluation.select_checkpoint(
        checkpoints, None, None, dev_split, 0.4,
        mode="known_group", known_group=1,
    )

    assert (best_0, best_1) == (1, 0)


def test_known_groups_score_their_worst_member(dev_split):
    checkpoints = [ALWAYS_ZERO, IDENTITY, ALWAYS_ONE]

    best, scores = evaluation.select_checkpoint(
        checkpoints, None, None, dev_split, 0.4,
        mode="known_group", known_group=[0, 1],
    )

    assert scores == [0.0, 1.0, 0.0]
    assert best == 1


def test_predicted_mode_computes_features_from_projection():
    split = synth.generate(
        agro.GeneratorConfig(n_train=40, n_dev=60, n_test=10, n_ood=10)
    ).dev
    d = split.inputs.shape[1]
    theta = network.init_network([d, 3, 2], 0)
    analog = agro.PretrainedAnalog(d, dim=2)
    dim = 2 + 3 + 2 + 2
    grouper = agro.Grouper(
        agro.NetworkParams([dim, 3], [np.zeros((3, dim))], [np.zeros(3)])
    )

    best, scores = evaluation.select_checkpoint(
        [theta], grouper, None, split, 0.5, analog=analog
    )

    assert best == 0
    assert len(scores) == 1


def test_selection_errors(dev_split):
    with pytest.raises(ConfigurationError):
        evaluation.select_checkpoint([], None, None, dev_split, 0.4)
    with pytest.raises(ConfigurationError):
        evaluation.select_checkpoint(
            [IDENTITY], None, None, dev_split, 0.4, mode="oracle"
        )
    with pytest.raises(ConfigurationError):
        evaluation.select_checkpoint(
            [IDENTITY], None, None, dev_split, 0.4, mode="known_group"
        )
    with pytest.raises(ConfigurationError):
        evaluation.select_checkpoint(
            [IDENTITY], None, None, dev_split, 0.4,
            mode="known_group", known_group=2,
        )
    with pytest.raises(ConfigurationError):
        evaluation.select_checkpoint(
            [IDENTITY], None, group_features(1), dev_split, 0.4
        )
    with pytest.raises(ConfigurationError):
        evaluation.select_checkpoint(
            [IDENTITY], ORACLE_GROUPER, None, dev_split, 0.4
        )
    with pytest.raises(ShapeError):
        evaluation.select_checkpoint(
            [IDENTITY], ORACLE_GROUPER, group_features(2), dev_split, 0.4
        )
