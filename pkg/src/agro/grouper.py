import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from agro import network
from agro.errors import ConfigurationError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class GrouperConfig:
    """Size of the grouper and its KL pretraining schedule."""

    hidden: int = 64
    epochs: int = 10
    batch_size: int = 256
    lr: float = 0.1
    weight_decay: float = 0.0
    standardize: bool = True
    seed: int = 0

    def validate(self):
        if self.hidden < 1:
            raise ConfigurationError("grouper hidden size must be >= 1")
        if self.epochs < 0:
            raise ConfigurationError("grouper epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("grouper batch_size must be >= 1")
        if not self.lr > 0:
            raise ConfigurationError("grouper lr must be > 0")
        if self.weight_decay < 0:
            raise ConfigurationError("grouper weight_decay must be >= 0")
        return self


def feature_matrix(features):
    matrix = getattr(features, "matrix", features)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    return matrix


class Grouper(object):
    """Adversary network mapping features to a soft distribution over groups.

    Parameters
    ----------
    params: NetworkParams
        Two-layer network [feature_dim, hidden, m]
    feature_mean: numpy.ndarray
        Subtracted from the features before the forward pass
    feature_scale: numpy.ndarray
        Divides the centered features
    """

    __slots__ = ["params", "feature_mean", "feature_scale"]

    def __init__(self, params, feature_mean=None, feature_scale=None):
        self.params = params
        dim = params.layer_sizes[0]
        if feature_mean is None:
            feature_mean = np.zeros(dim)
        if feature_scale is None:
            feature_scale = np.ones(dim)
        self.feature_mean = np.asarray(feature_mean, dtype=np.float64)
        self.feature_scale = np.asarray(feature_scale, dtype=np.float64)
        if self.feature_mean.shape != (dim,) or self.feature_scale.shape != (
            dim,
        ):
            raise ShapeError(
                "feature statistics must have length {}".format(dim)
            )

    def __eq__(self, other):
        return (
            isinstance(other, Grouper)
            and self.params == other.params
            and np.array_equal(self.feature_mean, other.feature_mean)
            and np.array_equal(self.feature_scale, other.feature_scale)
        )

    @property
    def m(self):
        return self.params.output_dim

    @property
    def feature_dim(self):
        return self.params.layer_sizes[0]

    def standardize(self, features):
        matrix = feature_matrix(features)
        if matrix.shape[1] != self.feature_dim:
            raise ShapeError(
                "features of dim {} for a grouper over dim {}".format(
                    matrix.shape[1], self.feature_dim
                )
            )
        return (matrix - self.feature_mean) / self.feature_scale

    def with_params(self, params):
        return Grouper(params, self.feature_mean, self.feature_scale)

    def save(self, stem, extra=None):
        entries = {"m": self.m, "feature_stats": "mean,scale"}
        entries.update(extra or {})
        self.params.save(
            stem,
            role="grouper",
            extra=entries,
            trailer=np.concatenate([self.feature_mean, self.feature_scale]),
        )

    @classmethod
    def from_file(cls, stem):
        params, manifest, trailer = network.load_checkpoint(stem)
        if manifest.get("role") != "grouper":
            raise ConfigurationError(
                "{} is not a grouper checkpoint".format(stem)
            )
        dim = params.layer_sizes[0]
        return cls(params, trailer[:dim], trailer[dim:2 * dim])


def init_grouper(feature_dim, m, hidden=64, seed=0, features=None,
                 standardize=True):
    """Create a randomly initialized grouper.

    Parameters
    ----------
    feature_dim: int
    m: int
        Number of groups
    hidden: int
    seed: int
    features: FeatureSet or numpy.ndarray
        Training features the standardization statistics are taken from
    standardize: bool
        Without it (or without features) the inputs are used as they are

    Returns
    -------
    Grouper
    """
    if m < 1:
        raise ConfigurationError("m must be >= 1, got {}".format(m))
    params = network.init_network([feature_dim, hidden, m], seed)
    mean = scale = None
    if standardize and features is not None:
        matrix = feature_matrix(features)
        if matrix.shape[1] != feature_dim:
            raise ShapeError(
                "features of dim {} for feature_dim {}".format(
                    matrix.shape[1], feature_dim
                )
            )
        mean = matrix.mean(axis=0)
        scale = matrix.std(axis=0)
        scale[scale == 0] = 1.0
    return Grouper(params, mean, scale)


def group_probs(grouper, features):
    """Soft group assignment P, one m-simplex row per example."""
    logits, _ = network.forward(grouper.params, grouper.standardize(features))
    return softmax(logits, axis=1)


def assignment_entropy(P):
    """Mean per-example entropy of the rows of P, in nats."""
    P = np.asarray(P, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P), 0.0)
    return float(-terms.sum(axis=1).mean())


def group_shares(P):
    return np.asarray(P, dtype=np.float64).mean(axis=0)


def loss_separation(P, losses):
    """Share of the variance of `losses` explained by the soft groups.

    Soft correlation ratio sum_g p_g (mean_g - mean)^2 / var, where p_g
    is the mean assignment of group g and mean_g the P-weighted mean
    loss in it. Zero when every group sees the same mean loss, which
    includes the case of a single group holding all the mass.
    """
    P = np.asarray(P, dtype=np.float64)
    losses = np.asarray(losses, dtype=np.float64).ravel()
    if P.ndim != 2 or P.shape[0] != losses.size:
        raise ShapeError(
            "assignment of shape {} for {} losses".format(
                P.shape, losses.size
            )
        )
    variance = losses.var()
    if losses.size == 0 or variance <= 0:
        return 0.0
    mass = P.sum(axis=0)
    present = mass > 0
    means = (P.T @ losses)[present] / mass[present]
    shares = mass[present] / losses.size
    between = shares @ (means - losses.mean()) ** 2
    return float(min(between / variance, 1.0))


def _check_targets(targets, n, m):
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (n, m):
        raise ShapeError(
            "targets of shape {} for {} examples and {} groups".format(
                targets.shape, n, m
            )
        )
    if np.any(targets < 0) or not np.allclose(
        targets.sum(axis=1), 1.0, atol=1e-6
    ):
        raise ConfigurationError("targets must be row-stochastic")
    return targets


def kl_divergence(targets, logits):
    """Mean over rows of KL(targets || softmax(logits))."""
    log_p = log_softmax(np.asarray(logits, dtype=np.float64), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(targets > 0, targets * (np.log(targets) - log_p), 0.0)
    return float(terms.sum(axis=1).mean())


def kl_gradients(grouper, features, targets):
    """Mean KL to the targets and its gradient for the grouper parameters.

    Returns
    -------
    tuple
        (float, GradientSet)
    """
    inputs = grouper.standardize(features)
    targets = _check_targets(targets, inputs.shape[0], grouper.m)
    logits, _ = network.forward(grouper.params, inputs)
    dlogits = (softmax(logits, axis=1) - targets) / inputs.shape[0]
    grads = network.backward_from_logits(grouper.params, inputs, dlogits)
    return kl_divergence(targets, logits), grads


def pretrain_kl(grouper, features, responsibilities, epochs=10,
                batch_size=256, lr=0.1, seed=0, weight_decay=0.0):
    """Fit the grouper to slice responsibilities by minimizing the mean KL.

    Parameters
    ----------
    grouper: Grouper
    features: FeatureSet or numpy.ndarray
    responsibilities: numpy.ndarray
        n x k row-stochastic targets, k must equal the grouper's m
    epochs: int
    batch_size: int
    lr: float
    seed: int
        Minibatch order
    weight_decay: float

    Returns
    -------
    tuple
        (Grouper, list of float) where the list holds the mean KL over all
        examples before training and after each epoch
    """
    responsibilities = np.asarray(responsibilities, dtype=np.float64)
    if responsibilities.ndim != 2 or responsibilities.shape[1] != grouper.m:
        raise ConfigurationError(
            "grouper has m={} groups but the slice model has k={}".format(
                grouper.m,
                responsibilities.shape[-1] if responsibilities.ndim else 0,
            )
        )
    matrix = feature_matrix(features)
    n = matrix.shape[0]
    _check_targets(responsibilities, n, grouper.m)
    if epochs < 0 or batch_size < 1:
        raise ConfigurationError("need epochs >= 0 and batch_size >= 1")

    def full_kl(g):
        logits, _ = network.forward(g.params, g.standardize(matrix))
        return kl_divergence(responsibilities, logits)

    rng = np.random.default_rng([int(seed), 4])
    trace = [full_kl(grouper)]
    for epoch in range(epochs):
        for index in network.minibatches(n, batch_size, rng):
            _, grads = kl_gradients(
                grouper, matrix[index], responsibilities[index]
            )
            grouper = grouper.with_params(
                network.sgd_step(grouper.params, grads, lr, weight_decay)
            )
        trace.append(full_kl(grouper))
        logger.info(
            "grouper pretraining epoch %d/%d KL %.5f",
            epoch + 1,
            epochs,
            trace[-1],
        )
    return grouper, trace


def soft_group_objective(grouper, features, losses, q):
    """Weighted soft-group loss J and its gradient for the grouper.

    J = (1/|B|) sum_g q(g) sum_i P[i, g] * losses[i]

    Parameters
    ----------
    grouper: Grouper
    features: numpy.ndarray
        |B| x feature_dim
    losses: numpy.ndarray
        Per-example task losses, treated as constants
    q: numpy.ndarray
        m group weights

    Returns
    -------
    tuple
        (float, GradientSet)
    """
    inputs = grouper.standardize(features)
    losses = np.asarray(losses, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    n = inputs.shape[0]
    if losses.shape != (n,) or q.shape != (grouper.m,):
        raise ShapeError(
            "{} losses and {} weights for {} examples and {} groups".format(
                losses.size, q.size, n, grouper.m
            )
        )
    logits, _ = network.forward(grouper.params, inputs)
    P = softmax(logits, axis=1)
    a = np.outer(losses, q) / n
    objective = float(np.sum(P * a))
    dlogits = P * (a - np.sum(P * a, axis=1, keepdims=True))
    grads = network.backward_from_logits(grouper.params, inputs, dlogits)
    return objective, grads
