import numpy as np
import pytest

import agro


def blob_features(n=120, seed=0):
    """Two blobs in the representation blocks, one per class."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    centers = np.where(labels[:, None] == 1, 3.0, -3.0)
    g_repr = centers[:, :1] * np.ones((n, 2)) + rng.standard_normal((n, 2))
    h_repr = centers[:, :1] * np.ones((n, 3)) + rng.standard_normal((n, 3))
    correct = rng.random(n) < 0.8
    predictions = np.where(correct, labels, 1 - labels)
    pred_probs = np.where(
        np.eye(2)[predictions] == 1, 0.9, 0.1
    )
    return agro.FeatureSet(g_repr, h_repr, np.eye(2)[labels], pred_probs)


@pytest.fixture
def features():
    return blob_features()
