import numpy as np
import pytest

import agro
from agro import synth
from agro.errors import MissingArtifactError, ShapeError

from tests.resources.fixtures import bundle


def test_group_accuracy_table_pairs():
    labels = np.array([0, 0, 1, 1, 1])
    groups = np.array([0, 0, 2, 2, 3])
    predictions = np.array([0, 1, 1, 1, 0])

    table = synth.group_accuracy_table(
        predictions, (labels, groups), n_groups=4
    )

    assert table == {0: (2, 0.5), 1: (0, None), 2: (2, 1.0), 3: (1, 0.0)}


def test_group_accuracy_table_split(bundle):
    table = synth.group_accuracy_table(bundle.test.labels, bundle.test)

    assert sorted(table) == [0, 1, 2, 3]
    assert sum(count for count, _ in table.values()) == 200
    assert all(acc == 1.0 for count, acc in table.values() if count)


def test_group_accuracy_table_shape_mismatch(bundle):
    with pytest.raises(ShapeError):
        synth.group_accuracy_table(np.zeros(3), bundle.test)


def test_split_indexing(bundle):
    example = bundle.train[4]

    assert np.array_equal(example.x, bundle.train.inputs[4])
    assert example.y == bundle.train.labels[4]
    assert example.true_group == bundle.train.true_groups[4]


def test_bundle_save_and_load(tmp_path, bundle):
    bundle.save(tmp_path / "data")

    loaded = agro.DatasetBundle.from_directory(tmp_path / "data")

    assert loaded == bundle
    assert loaded.config.spurious_attrs[0].correlation == 0.8
    header = (tmp_path / "data" / "train.csv").read_text().splitlines()[0]
    assert header.endswith("x_7,y,true_group,fold")


def test_bundle_missing_directory(tmp_path):
    with pytest.raises(MissingArtifactError):
        agro.DatasetBundle.from_directory(tmp_path / "nowhere")
