import numpy as np
import pytest

import agro
from agro import synth
from agro.errors import ConfigurationError

from tests.resources.fixtures import bundle
from tests.resources.fixtures.data import small_generator_config


def test_generate_sizes(bundle):
    assert [len(bundle.split(s)) for s in synth.SPLITS] == [300, 200, 200, 200]
    assert bundle.train.inputs.shape == (300, 8)
    assert bundle.train.n_groups == 4
    assert bundle.config.input_dim == 8


def test_generate_deterministic():
    a = synth.generate(small_generator_config(seed=5))
    b = synth.generate(small_generator_config(seed=5))
    c = synth.generate(small_generator_config(seed=6))

    assert a == b
    assert not np.array_equal(a.train.inputs, c.train.inputs)


def test_group_code_matches_label(bundle):
    for name in synth.SPLITS:
        split = bundle.split(name)
        assert np.array_equal(split.true_groups // 2, split.labels)


def test_aligned_fraction_follows_correlation():
    config = agro.GeneratorConfig(
        n_train=4000,
        n_dev=0,
        n_test=0,
        n_ood=4000,
        spurious_attrs=[agro.SpuriousAttribute(correlation=0.9)],
        seed=1,
    )
    generated = synth.generate(config)

    train_aligned = np.mean(generated.train.true_groups % 2 == 1)
    ood_aligned = np.mean(generated.ood.true_groups % 2 == 1)

    assert train_aligned == pytest.approx(0.9, abs=0.03)
    assert ood_aligned == pytest.approx(0.1, abs=0.03)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_minority_cells_at_benchmark_correlation(seed):
    config = agro.GeneratorConfig(
        n_train=10000, n_dev=0, n_test=0, n_ood=0, seed=seed
    )

    counts = synth.generate(config).train.group_counts()

    assert counts.sum() == 10000
    for g in (0, 2):
        assert 175 <= counts[g] <= 325
    for g in (1, 3):
        assert 4750 - 4 * 70 <= counts[g] <= 4750 + 4 * 70


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_balanced_cells_without_correlation(seed):
    n = 10000
    config = agro.GeneratorConfig(
        n_train=n,
        n_dev=0,
        n_test=0,
        n_ood=0,
        spurious_attrs=[agro.SpuriousAttribute(correlation=0.5)],
        seed=seed,
    )

    counts = synth.generate(config).train.group_counts()

    sigma = np.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(counts - n / 4) <= 4 * sigma)


def test_full_correlation_leaves_minority_groups_empty():
    generated = synth.generate(small_generator_config(correlation=1.0))

    counts = generated.train.group_counts()

    assert counts[0] == 0 and counts[2] == 0
    assert counts[1] > 0 and counts[3] > 0


def test_groups_follow_noisy_labels():
    config = small_generator_config()
    config.label_noise = 1.0

    generated = synth.generate(config)

    assert np.array_equal(
        generated.train.true_groups // 2, generated.train.labels
    )


def test_training_view_hides_groups(bundle):
    view = bundle.train.training_view()

    assert not hasattr(view, "true_groups")
    assert len(view) == 300
    assert view.input_dim == 8
    assert np.array_equal(view.folds, bundle.train.folds)


def test_three_classes_two_attributes():
    config = agro.GeneratorConfig(
        n_train=600,
        n_dev=10,
        n_test=10,
        n_ood=10,
        n_classes=3,
        d_core=3,
        spurious_attrs=[
            agro.SpuriousAttribute(correlation=0.9),
            agro.SpuriousAttribute(correlation=0.7, dim=3, strength=0.5),
        ],
    )

    generated = synth.generate(config)

    assert config.n_groups == 12
    assert generated.train.inputs.shape == (600, 3 + 2 + 3 + 4)
    assert generated.train.true_groups.max() < 12
    assert np.array_equal(generated.train.true_groups // 4,
                          generated.train.labels)


@pytest.mark.parametrize(
    "changes",
    [
        {"n_classes": 1},
        {"n_train": -1},
        {"n_folds": 1},
        {"label_noise": 1.5},
        {"spurious_attrs": [{"correlation": 1.5}]},
        {"spurious_attrs": [{"dim": 0}]},
    ],
)
def test_generator_config_invalid(changes):
    with pytest.raises(ConfigurationError):
        agro.GeneratorConfig(**changes).validate()
