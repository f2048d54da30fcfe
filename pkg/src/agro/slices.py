"""Error-aware mixture model over (embedding, label, prediction).

Each slice j has a prior p_S[j], a diagonal Gaussian over embeddings and two
categoricals, over labels and over predicted classes. The label and
prediction likelihoods are raised to `gamma_slice`; gamma_slice=0 leaves a
plain Gaussian mixture on the embeddings.
"""
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus
from sklearn.decomposition import PCA

from agro import storage
from agro.errors import (
    ConfigurationError,
    EmptySliceWarning,
    ShapeError,
    SliceUnderflowWarning,
)

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class SliceConfig:
    """EM settings; `reduce_dims` None means PCA only when d > max_dims."""

    gamma_slice: float = 1.0
    max_iters: int = 100
    tol: float = 1e-5
    var_floor: float = 1e-4
    reduce_dims: bool = None
    max_dims: int = 32
    seed: int = 0

    def validate(self):
        if self.gamma_slice < 0:
            raise ConfigurationError("gamma_slice must be >= 0")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ConfigurationError("tol must be > 0")
        if not self.var_floor > 0:
            raise ConfigurationError("var_floor must be > 0")
        if self.max_dims < 1:
            raise ConfigurationError("max_dims must be >= 1")
        return self


class SliceModelParams(object):
    """Parameters of the slice mixture.

    Parameters
    ----------
    p_s: numpy.ndarray
        k slice priors
    mu: numpy.ndarray
        k x d means
    sigma: numpy.ndarray
        k x d diagonal variances
    p_label: numpy.ndarray
        k x C label distributions
    p_pred: numpy.ndarray
        k x C prediction distributions
    gamma_slice: float
        Exponent on the label and prediction terms
    var_floor: float
        Lower bound on every variance
    """

    __slots__ = ["p_s", "mu", "sigma", "p_label", "p_pred", "gamma_slice",
                 "var_floor"]

    def __init__(self, p_s, mu, sigma, p_label, p_pred, gamma_slice=1.0,
                 var_floor=1e-4):
        self.p_s = np.asarray(p_s, dtype=np.float64)
        self.mu = np.asarray(mu, dtype=np.float64)
        self.sigma = np.asarray(sigma, dtype=np.float64)
        self.p_label = np.asarray(p_label, dtype=np.float64)
        self.p_pred = np.asarray(p_pred, dtype=np.float64)
        self.gamma_slice = float(gamma_slice)
        self.var_floor = float(var_floor)
        k = self.p_s.size
        if self.mu.shape != self.sigma.shape or self.mu.shape[0] != k:
            raise ShapeError("means and variances must be k x d")
        if (
            self.p_label.shape[0] != k
            or self.p_pred.shape != self.p_label.shape
        ):
            raise ShapeError("label and prediction tables must be k x C")

    @property
    def k(self):
        return self.p_s.size

    @property
    def dim(self):
        return self.mu.shape[1]

    @property
    def n_classes(self):
        return self.p_label.shape[1]

    def is_valid(self, atol=1e-8):
        rows = [self.p_s[None, :], self.p_label, self.p_pred]
        return (
            all(np.allclose(r.sum(axis=1), 1.0, atol=atol) for r in rows)
            and all(np.all(r >= 0) for r in rows)
            and np.all(self.sigma >= self.var_floor)
            and self.gamma_slice >= 0
        )

    def flatten(self):
        return np.concatenate(
            [
                self.p_s,
                self.mu.ravel(),
                self.sigma.ravel(),
                self.p_label.ravel(),
                self.p_pred.ravel(),
            ]
        )


def _log_joint(params, Z, labels, predictions):
    """n x k matrix of log p_S + log N + gamma (log p_label + log p_pred)."""
    diff = Z[:, None, :] - params.mu[None, :, :]
    log_gauss = -0.5 * (
        np.sum(LOG_2PI + np.log(params.sigma), axis=1)[None, :]
        + np.sum(diff ** 2 / params.sigma[None, :, :], axis=2)
    )
    with np.errstate(divide="ignore"):
        log_joint = np.log(params.p_s)[None, :] + log_gauss
        if params.gamma_slice != 0:
            log_joint = log_joint + params.gamma_slice * (
                np.log(params.p_label[:, labels]).T
                + np.log(params.p_pred[:, predictions]).T
            )
    return log_joint


def _posterior(log_joint):
    """Row-normalized responsibilities and per-row log normalizers."""
    with np.errstate(invalid="ignore", divide="ignore"):
        log_norm = logsumexp(log_joint, axis=1)
    dead = ~np.isfinite(log_norm)
    resp = np.empty_like(log_joint)
    alive = ~dead
    resp[alive] = np.exp(log_joint[alive] - log_norm[alive, None])
    if np.any(dead):
        resp[dead] = 1.0 / log_joint.shape[1]
        warnings.warn(
            "{} examples have zero density under every slice; using a "
            "uniform posterior".format(int(dead.sum())),
            SliceUnderflowWarning,
        )
    return resp, log_norm


def _seed_indices(Z, k, rng):
    """k row indices picked by k-means++ among the distinct rows.

    With fewer than k distinct rows any k rows are taken.
    """
    _, first = np.unique(Z, axis=0, return_index=True)
    if first.size < k:
        return rng.permutation(Z.shape[0])[:k]
    distinct = np.sort(first)
    _, index = kmeans_plusplus(
        Z[distinct], k, random_state=int(rng.integers(2 ** 31 - 1))
    )
    return distinct[index]


def _smoothed_histogram(values, n_classes):
    counts = np.bincount(values, minlength=n_classes).astype(np.float64)
    return (counts + 1.0) / (counts.sum() + n_classes)


def _m_step(Z, onehot_y, onehot_yhat, resp, log_norm, params, global_var):
    n = Z.shape[0]
    mass = resp.sum(axis=0)
    empty = mass < 1e-10
    safe = np.where(empty, 1.0, mass)
    mu = (resp.T @ Z) / safe[:, None]
    sigma = np.empty_like(mu)
    for j in range(mu.shape[0]):
        sigma[j] = resp[:, j] @ (Z - mu[j]) ** 2 / safe[j]
    sigma = np.maximum(sigma, params.var_floor)
    p_s = mass / n
    p_label = (resp.T @ onehot_y) / safe[:, None]
    p_pred = (resp.T @ onehot_yhat) / safe[:, None]
    if np.any(empty):
        worst = int(np.argmin(log_norm))
        for j in np.flatnonzero(empty):
            mu[j] = Z[worst]
            sigma[j] = global_var
            p_label[j] = _smoothed_histogram(
                np.argmax(onehot_y, axis=1), onehot_y.shape[1]
            )
            p_pred[j] = _smoothed_histogram(
                np.argmax(onehot_yhat, axis=1), onehot_yhat.shape[1]
            )
            p_s[j] = 1.0 / n
        p_s = p_s / p_s.sum()
        logger.warning(
            "re-seeded empty slices %s from example %d",
            list(np.flatnonzero(empty)),
            worst,
        )
        warnings.warn(
            "re-seeded {} empty slice(s)".format(int(empty.sum())),
            EmptySliceWarning,
        )
    return SliceModelParams(
        p_s, mu, sigma, p_label, p_pred, params.gamma_slice, params.var_floor
    )


def _check_inputs(Z, labels, yhat_probs):
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    yhat_probs = np.asarray(yhat_probs, dtype=np.float64)
    if Z.ndim != 2 or yhat_probs.ndim != 2:
        raise ShapeError("Z and prediction probabilities must be matrices")
    if not Z.shape[0] == labels.size == yhat_probs.shape[0]:
        raise ShapeError(
            "{} embeddings, {} labels, {} prediction rows".format(
                Z.shape[0], labels.size, yhat_probs.shape[0]
            )
        )
    if not np.all(np.isfinite(Z)):
        raise ConfigurationError("embeddings must be finite")
    if np.any(yhat_probs < 0) or not np.allclose(
        yhat_probs.sum(axis=1), 1.0, atol=1e-6
    ):
        raise ConfigurationError("prediction rows must lie on the simplex")
    n_classes = yhat_probs.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ConfigurationError("labels outside the prediction classes")
    return Z, labels, yhat_probs


def fit_em(Z, Y, Yhat_probs, k, gamma_slice=1.0, max_iters=100, tol=1e-5,
           seed=0, var_floor=1e-4):
    """Fit the slice mixture by expectation-maximization.

    Parameters
    ----------
    Z: numpy.ndarray
        n x d embeddings
    Y: numpy.ndarray
        n labels
    Yhat_probs: numpy.ndarray
        n x C predicted probabilities; their argmax is the prediction
    k: int
        Number of slices, at most n
    gamma_slice: float
        Weight of the label and prediction terms
    max_iters: int
    tol: float
        Stop once the log-likelihood changes by less than this
    seed: int
        Chooses the k examples the means start at
    var_floor: float

    Returns
    -------
    tuple
        (SliceModelParams, n x k responsibilities, log-likelihood per
        iteration); the responsibilities belong to the returned parameters
    """
    Z, labels, yhat_probs = _check_inputs(Z, Y, Yhat_probs)
    n, d = Z.shape
    if k < 1 or n < k:
        raise ConfigurationError(
            "need 1 <= k <= n, got k={}, n={}".format(k, n)
        )
    if gamma_slice < 0:
        raise ConfigurationError("gamma_slice must be >= 0")
    if max_iters < 1:
        raise ConfigurationError("max_iters must be >= 1")
    if not var_floor > 0:
        raise ConfigurationError("var_floor must be > 0")
    n_classes = yhat_probs.shape[1]
    predictions = np.argmax(yhat_probs, axis=1)
    onehot_y = np.eye(n_classes)[labels]
    onehot_yhat = np.eye(n_classes)[predictions]

    rng = np.random.default_rng(seed)
    global_var = np.maximum(Z.var(axis=0), var_floor)
    params = SliceModelParams(
        np.full(k, 1.0 / k),
        Z[_seed_indices(Z, k, rng)].copy(),
        np.tile(global_var, (k, 1)),
        np.tile(_smoothed_histogram(labels, n_classes), (k, 1)),
        np.tile(_smoothed_histogram(predictions, n_classes), (k, 1)),
        gamma_slice,
        var_floor,
    )
    trace = []
    for iteration in range(max_iters):
        resp, log_norm = _posterior(
            _log_joint(params, Z, labels, predictions)
        )
        trace.append(float(log_norm.sum()))
        logger.debug("em iteration %d loglik %.6f", iteration, trace[-1])
        if iteration > 0 and abs(trace[-1] - trace[-2]) < tol:
            break
        if iteration == max_iters - 1:
            break
        params = _m_step(
            Z, onehot_y, onehot_yhat, resp, log_norm, params, global_var
        )
    logger.info(
        "slice model: k=%d d=%d gamma=%g, %d iterations, loglik %.4f",
        k,
        d,
        gamma_slice,
        len(trace),
        trace[-1],
    )
    return params, resp, trace


def predict_slice_probs(params, z, y, yhat):
    """Posterior slice distribution of one or more examples.

    Parameters
    ----------
    params: SliceModelParams
    z: numpy.ndarray
        Embedding (d,) or embeddings (n, d)
    y: int or numpy.ndarray
        Label(s)
    yhat: int, numpy.ndarray
        Predicted class id(s), or floating prediction probabilities whose
        argmax is taken

    Returns
    -------
    numpy.ndarray
        k-simplex, or n x k rows
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    Z = z.reshape(1, -1) if single else z
    if Z.shape[1] != params.dim:
        raise ShapeError(
            "embedding dim {} for a model of dim {}".format(
                Z.shape[1], params.dim
            )
        )
    labels = np.atleast_1d(np.asarray(y, dtype=np.int64))
    yhat = np.asarray(yhat)
    if np.issubdtype(yhat.dtype, np.floating):
        predictions = np.atleast_1d(np.argmax(np.atleast_2d(yhat), axis=1))
    else:
        predictions = np.atleast_1d(yhat.astype(np.int64))
    resp, _ = _posterior(_log_joint(params, Z, labels, predictions))
    return resp[0] if single else resp


class SliceModel(object):
    """Fitted slice mixture together with its optional PCA projection.

    Parameters
    ----------
    params: SliceModelParams
    proj_mean: numpy.ndarray
        Mean removed before projecting, None without PCA
    proj_components: numpy.ndarray
        d' x d projection, None without PCA
    loglik_trace: list of float
    """

    __slots__ = ["params", "proj_mean", "proj_components", "loglik_trace"]

    def __init__(self, params, proj_mean=None, proj_components=None,
                 loglik_trace=None):
        self.params = params
        self.proj_mean = proj_mean
        self.proj_components = proj_components
        self.loglik_trace = list(loglik_trace or [])

    @property
    def k(self):
        return self.params.k

    def embed(self, embedding):
        embedding = np.asarray(embedding, dtype=np.float64)
        if self.proj_components is None:
            return embedding
        return (embedding - self.proj_mean) @ self.proj_components.T

    def predict(self, features):
        """Slice responsibilities for a FeatureSet."""
        return predict_slice_probs(
            self.params,
            self.embed(features.embedding),
            features.labels,
            features.predictions,
        )

    def save(self, stem):
        p = self.params
        parts = [p.flatten()]
        input_dim = 0
        if self.proj_components is not None:
            input_dim = self.proj_components.shape[1]
            parts += [self.proj_mean.ravel(), self.proj_components.ravel()]
        parts.append(np.asarray(self.loglik_trace, dtype=np.float64))
        entries = {
            "k": p.k,
            "d": p.dim,
            "n_classes": p.n_classes,
            "gamma_slice": p.gamma_slice,
            "var_floor": p.var_floor,
            "iters": len(self.loglik_trace),
            "final_loglik": self.loglik_trace[-1] if self.loglik_trace else "",
            "projection_input_dim": input_dim,
        }
        storage.save_checkpoint(stem, np.concatenate(parts), entries)

    @classmethod
    def from_file(cls, stem):
        vector, manifest = storage.load_checkpoint(stem)
        k, d = int(manifest["k"]), int(manifest["d"])
        C = int(manifest["n_classes"])
        sizes = [k, k * d, k * d, k * C, k * C]
        chunks, offset = [], 0
        for size in sizes:
            chunks.append(vector[offset:offset + size])
            offset += size
        params = SliceModelParams(
            chunks[0],
            chunks[1].reshape(k, d),
            chunks[2].reshape(k, d),
            chunks[3].reshape(k, C),
            chunks[4].reshape(k, C),
            float(manifest["gamma_slice"]),
            float(manifest["var_floor"]),
        )
        input_dim = int(manifest["projection_input_dim"])
        proj_mean = proj_components = None
        if input_dim:
            proj_mean = vector[offset:offset + input_dim]
            offset += input_dim
            proj_components = vector[offset:offset + d * input_dim].reshape(
                d, input_dim
            )
            offset += d * input_dim
        iters = int(manifest["iters"])
        loglik_trace = vector[offset:offset + iters].tolist()
        return cls(params, proj_mean, proj_components, loglik_trace)


def fit_slices(features, k, config):
    """Fit the slice model on a FeatureSet's embedding, labels, predictions.

    Parameters
    ----------
    features: FeatureSet
    k: int
        Number of slices
    config: SliceConfig

    Returns
    -------
    tuple
        (SliceModel, n x k responsibilities)
    """
    config.validate()
    Z = features.embedding
    proj_mean = proj_components = None
    reduce_dims = config.reduce_dims
    if reduce_dims is None:
        reduce_dims = Z.shape[1] > config.max_dims
    if reduce_dims:
        n_components = min(Z.shape[1], config.max_dims, Z.shape[0])
        pca = PCA(
            n_components=n_components, svd_solver="full",
            random_state=config.seed,
        ).fit(Z)
        proj_mean, proj_components = pca.mean_, pca.components_
        Z = (Z - proj_mean) @ proj_components.T
    params, resp, trace = fit_em(
        Z,
        features.labels,
        features.pred_probs,
        k,
        gamma_slice=config.gamma_slice,
        max_iters=config.max_iters,
        tol=config.tol,
        seed=config.seed,
        var_floor=config.var_floor,
    )
    return SliceModel(params, proj_mean, proj_components, trace), resp


def slice_report(resp, labels, predictions):
    """Size, dominant (y, y_hat) pair and error rate of each hard slice.

    Returns
    -------
    list of dict
        One row per slice with keys slice, size, top_y, top_yhat,
        top_pair_share, error_rate; empty slices have None statistics
    """
    hard = np.argmax(resp, axis=1)
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    n_classes = int(max(labels.max(initial=0), predictions.max(initial=0))) + 1
    rows = []
    for j in range(resp.shape[1]):
        member = hard == j
        size = int(member.sum())
        row = {"slice": j, "size": size, "top_y": None, "top_yhat": None,
               "top_pair_share": None, "error_rate": None}
        if size:
            pairs = np.bincount(
                labels[member] * n_classes + predictions[member],
                minlength=n_classes * n_classes,
            )
            top = int(np.argmax(pairs))
            row.update(
                top_y=top // n_classes,
                top_yhat=top % n_classes,
                top_pair_share=float(pairs[top] / size),
                error_rate=float(
                    np.mean(labels[member] != predictions[member])
                ),
            )
        rows.append(row)
    return rows
