import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import softmax

from agro import network, storage
from agro.errors import ConfigurationError, NumericError, ShapeError

logger = logging.getLogger(__name__)

BLOCKS = ("g_repr", "h_repr", "y_onehot", "pred_probs")


@dataclass
class NetSpec:
    """Hidden layer sizes of the task network."""

    hidden_sizes: tuple = (32,)

    def validate(self):
        if any(int(h) < 1 for h in self.hidden_sizes):
            raise ConfigurationError(
                "hidden sizes must be >= 1, got {}".format(self.hidden_sizes)
            )
        return self

    def layer_sizes(self, input_dim, n_classes):
        return [int(input_dim)] + [int(h) for h in self.hidden_sizes] + [
            int(n_classes)
        ]


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    lr: float = 0.05
    weight_decay: float = 0.0
    seed: int = 0

    def validate(self):
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ConfigurationError("lr must be > 0")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0")
        return self


class TrainResult(object):
    """Outcome of a training run.

    Parameters
    ----------
    params: NetworkParams
        Final parameters
    checkpoints: list of NetworkParams
        Parameters after every epoch
    epoch_losses: list of float
        Mean training loss seen during each epoch
    """

    __slots__ = ["params", "checkpoints", "epoch_losses"]

    def __init__(self, params, checkpoints, epoch_losses):
        self.params = params
        self.checkpoints = checkpoints
        self.epoch_losses = epoch_losses


def shuffle_rng(seed):
    return np.random.default_rng([int(seed), 1])


def train_erm(view, net_spec, train_config, init_params=None):
    """Train the task network with uniform example weights.

    Parameters
    ----------
    view: TrainingView
        Training data
    net_spec: NetSpec
    train_config: TrainConfig
    init_params: NetworkParams
        Start here instead of a fresh initialization

    Returns
    -------
    TrainResult
    """
    train_config.validate()
    net_spec.validate()
    n = len(view)
    if n == 0:
        raise ConfigurationError("cannot train on an empty training view")
    params = init_params
    if params is None:
        params = network.init_network(
            net_spec.layer_sizes(view.input_dim, view.n_classes),
            train_config.seed,
        )
    rng = shuffle_rng(train_config.seed)
    checkpoints, epoch_losses = [], []
    for epoch in range(train_config.epochs):
        total = 0.0
        for step, index in enumerate(
            network.minibatches(n, train_config.batch_size, rng)
        ):
            batch = network.Batch(view.inputs[index], view.labels[index])
            logits, _ = network.forward(params, batch.inputs)
            try:
                _, loss = network.weighted_ce_loss(
                    logits, batch.labels, batch.example_weights
                )
            except NumericError:
                raise NumericError(
                    "ERM diverged at epoch {} step {}: non-finite logits "
                    "(lr={})".format(epoch, step, train_config.lr)
                )
            if not np.isfinite(loss):
                raise NumericError(
                    "ERM diverged at epoch {} step {}: loss {}".format(
                        epoch, step, loss
                    )
                )
            grads = network.backward(params, batch)
            params = network.sgd_step(
                params, grads, train_config.lr, train_config.weight_decay
            )
            total += loss * index.size
        epoch_losses.append(total / n)
        checkpoints.append(params)
        logger.info(
            "erm epoch %d/%d loss %.4f",
            epoch + 1,
            train_config.epochs,
            epoch_losses[-1],
        )
    return TrainResult(params, checkpoints, epoch_losses)


class PretrainedAnalog(object):
    """Frozen random linear projection shared by the whole experiment.

    Parameters
    ----------
    input_dim: int
    dim: int
        Output dimension; 0 disables the block
    seed: int
    """

    __slots__ = ["input_dim", "dim", "seed", "projection"]

    def __init__(self, input_dim, dim=16, seed=0):
        if dim < 0:
            raise ConfigurationError("projection dim must be >= 0")
        self.input_dim = int(input_dim)
        self.dim = int(dim)
        self.seed = seed
        rng = np.random.default_rng([int(seed), 2])
        self.projection = rng.standard_normal(
            (self.dim, self.input_dim)
        ) / np.sqrt(self.input_dim)

    def __call__(self, inputs):
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.shape[-1] != self.input_dim:
            raise ShapeError(
                "inputs of dim {} for a projection from {}".format(
                    inputs.shape[-1], self.input_dim
                )
            )
        return inputs @ self.projection.T


def pretrained_analog(x, dim=16, seed=0):
    """Project x with the experiment's frozen projection for `seed`."""
    x = np.asarray(x, dtype=np.float64)
    return PretrainedAnalog(x.shape[-1], dim, seed)(x)


class FeatureVector(object):
    """Grouper input of one example: g(x), h(x), one-hot y, p(y_hat|x)."""

    __slots__ = ["g_repr", "h_repr", "y_onehot", "pred_probs"]

    def __init__(self, g_repr, h_repr, y_onehot, pred_probs):
        self.g_repr = g_repr
        self.h_repr = h_repr
        self.y_onehot = y_onehot
        self.pred_probs = pred_probs

    def concat(self):
        return np.concatenate(
            [self.g_repr, self.h_repr, self.y_onehot, self.pred_probs]
        )


class FeatureSet(object):
    """Features of a whole split, stored block-wise.

    Parameters
    ----------
    g_repr: numpy.ndarray
        n x d_g pretrained-analog representation
    h_repr: numpy.ndarray
        n x H representation from the task model's last hidden layer
    y_onehot: numpy.ndarray
        n x C
    pred_probs: numpy.ndarray
        n x C predicted class probabilities
    source_folds: numpy.ndarray
        Fold whose held-out model produced each row, -1 for a single model
    """

    __slots__ = ["g_repr", "h_repr", "y_onehot", "pred_probs", "source_folds"]

    def __init__(self, g_repr, h_repr, y_onehot, pred_probs,
                 source_folds=None):
        n = y_onehot.shape[0]
        self.g_repr = np.asarray(g_repr, dtype=np.float64).reshape(n, -1)
        self.h_repr = np.asarray(h_repr, dtype=np.float64).reshape(n, -1)
        self.y_onehot = np.asarray(y_onehot, dtype=np.float64)
        self.pred_probs = np.asarray(pred_probs, dtype=np.float64)
        if source_folds is None:
            source_folds = np.full(n, -1)
        self.source_folds = np.asarray(source_folds, dtype=np.int64)

    def __len__(self):
        return self.y_onehot.shape[0]

    def __getitem__(self, i):
        return FeatureVector(
            self.g_repr[i],
            self.h_repr[i],
            self.y_onehot[i],
            self.pred_probs[i],
        )

    def __eq__(self, other):
        return all(
            np.array_equal(getattr(self, b), getattr(other, b))
            for b in BLOCKS + ("source_folds",)
        )

    @property
    def matrix(self):
        return np.hstack([getattr(self, b) for b in BLOCKS])

    @property
    def dim(self):
        return sum(getattr(self, b).shape[1] for b in BLOCKS)

    @property
    def layout(self):
        layout, start = {}, 0
        for b in BLOCKS:
            width = getattr(self, b).shape[1]
            layout[b] = (start, start + width)
            start += width
        return layout

    @property
    def embedding(self):
        """Representation part (g and h) used as the slice-model embedding."""
        return np.hstack([self.g_repr, self.h_repr])

    @property
    def labels(self):
        return np.argmax(self.y_onehot, axis=1)

    @property
    def predictions(self):
        return np.argmax(self.pred_probs, axis=1)

    def subset(self, index):
        return FeatureSet(
            self.g_repr[index],
            self.h_repr[index],
            self.y_onehot[index],
            self.pred_probs[index],
            self.source_folds[index],
        )

    def save(self, stem, seeds=None):
        """Write '<stem>.bin' (row-major matrix, then source folds) and
        '<stem>.manifest'."""
        entries = {"n": len(self), "dim": self.dim}
        for b, (start, stop) in self.layout.items():
            entries["block_{}".format(b)] = "{}:{}".format(start, stop)
        entries["trailer"] = "source_folds"
        entries.update(seeds or {})
        vector = np.concatenate(
            [self.matrix.ravel(), self.source_folds.astype(np.float64)]
        )
        storage.save_checkpoint(stem, vector, entries)

    def to_csv(self, path):
        header = []
        for b, (start, stop) in self.layout.items():
            header += ["{}_{}".format(b, j) for j in range(stop - start)]
        storage.write_csv(
            path,
            header + ["source_fold"],
            (
                list(row) + [fold]
                for row, fold in zip(self.matrix, self.source_folds)
            ),
        )

    @classmethod
    def from_file(cls, stem):
        vector, manifest = storage.load_checkpoint(stem)
        n, dim = int(manifest["n"]), int(manifest["dim"])
        matrix = vector[:n * dim].reshape(n, dim)
        blocks = []
        for b in BLOCKS:
            start, stop = (
                int(v) for v in manifest["block_{}".format(b)].split(":")
            )
            blocks.append(matrix[:, start:stop])
        return cls(*blocks, source_folds=vector[n * dim:].astype(np.int64))


def features_from_model(params, inputs, labels, n_classes, analog):
    """Features of a split computed with one task model.

    Parameters
    ----------
    params: NetworkParams
        Task model supplying h(x) and p(y_hat|x)
    inputs: numpy.ndarray
    labels: numpy.ndarray
    n_classes: int
    analog: PretrainedAnalog

    Returns
    -------
    FeatureSet
    """
    logits, hidden = network.forward(params, inputs)
    return FeatureSet(
        analog(inputs),
        hidden,
        np.eye(n_classes)[np.asarray(labels, dtype=np.int64)],
        softmax(logits, axis=1),
    )


def extract_features_kfold(view, K, net_spec, train_config, analog,
                           return_models=False):
    """Grouper features where every row comes from a model that never saw it.

    For fold k a task model is trained on all other folds (seed + k) and
    produces h(x) and p(y_hat|x) for the examples of fold k.

    Parameters
    ----------
    view: TrainingView
        Training data with fold ids in [0, K)
    K: int
    net_spec: NetSpec
    train_config: TrainConfig
    analog: PretrainedAnalog
    return_models: bool
        Also return the K fold models

    Returns
    -------
    FeatureSet, or (FeatureSet, list of NetworkParams)
    """
    if K < 2:
        raise ConfigurationError("K must be >= 2, got {}".format(K))
    folds = view.folds
    if folds.size and (folds.min() < 0 or folds.max() >= K):
        raise ConfigurationError(
            "fold ids must lie in [0, {}), got [{}, {}]".format(
                K, folds.min(), folds.max()
            )
        )
    n = len(view)
    hidden_dim = (list(net_spec.hidden_sizes) or [view.input_dim])[-1]
    h_repr = np.zeros((n, hidden_dim))
    pred_probs = np.zeros((n, view.n_classes))
    source = np.full(n, -1, dtype=np.int64)
    models = []
    for k in range(K):
        held_out = np.flatnonzero(folds == k)
        if held_out.size == 0:
            raise ConfigurationError(
                "fold {} has no held-out examples".format(k)
            )
        trained_on = np.flatnonzero(folds != k)
        result = train_erm(
            view.subset(trained_on),
            net_spec,
            replace(train_config, seed=train_config.seed + k),
        )
        logits, hidden = network.forward(result.params, view.inputs[held_out])
        h_repr[held_out] = hidden
        pred_probs[held_out] = softmax(logits, axis=1)
        source[held_out] = k
        models.append(result.params)
        logger.info(
            "fold %d/%d: trained on %d, featurized %d",
            k + 1,
            K,
            trained_on.size,
            held_out.size,
        )
    features = FeatureSet(
        analog(view.inputs),
        h_repr,
        np.eye(view.n_classes)[view.labels],
        pred_probs,
        source,
    )
    if return_models:
        return features, models
    return features
