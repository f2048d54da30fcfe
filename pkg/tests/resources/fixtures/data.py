import pytest

import agro
from agro import synth


def small_generator_config(seed=0, correlation=0.8):
    return agro.GeneratorConfig(
        n_train=300,
        n_dev=200,
        n_test=200,
        n_ood=200,
        spurious_attrs=[agro.SpuriousAttribute(correlation=correlation)],
        n_folds=3,
        seed=seed,
    )


@pytest.fixture
def bundle():
    return synth.generate(small_generator_config())


@pytest.fixture
def view():
    return synth.generate(small_generator_config()).train.training_view()
