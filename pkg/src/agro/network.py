import logging

import numpy as np
from scipy.special import log_softmax, softmax

from agro import storage
from agro.errors import ConfigurationError, NumericError, ShapeError

logger = logging.getLogger(__name__)

ACTIVATION = "relu"
DIRECTIONS = ("descend", "ascend")


def _unflatten(layer_sizes, vector):
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        size = fan_in * fan_out
        weights.append(vector[offset:offset + size].reshape(fan_out, fan_in))
        offset += size
        biases.append(vector[offset:offset + fan_out].copy())
        offset += fan_out
    if offset != vector.size:
        raise ShapeError(
            "expected {} values for layers {}, got {}".format(
                offset, layer_sizes, vector.size
            )
        )
    return [w.copy() for w in weights], biases


def _flatten(weights, biases):
    parts = []
    for w, b in zip(weights, biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def _check_congruent(layer_sizes, weights, biases):
    if len(weights) != len(layer_sizes) - 1 or len(biases) != len(weights):
        raise ShapeError(
            "{} weight and {} bias arrays for layer sizes {}".format(
                len(weights), len(biases), layer_sizes
            )
        )
    for l, (w, b) in enumerate(zip(weights, biases)):
        shape = (layer_sizes[l + 1], layer_sizes[l])
        if w.shape != shape or b.shape != (layer_sizes[l + 1],):
            raise ShapeError(
                "layer {}: weight {} / bias {}, expected {} / {}".format(
                    l, w.shape, b.shape, shape, (layer_sizes[l + 1],)
                )
            )


class NetworkParams(object):
    """Parameters of a fully connected ReLU network.

    Both the task model and the grouper are instances of this class.

    Parameters
    ----------
    layer_sizes: list of int
        Input dimension, hidden sizes, output dimension
    weights: list of numpy.ndarray
        weights[l] has shape (layer_sizes[l + 1], layer_sizes[l])
    biases: list of numpy.ndarray
        biases[l] has length layer_sizes[l + 1]
    activation: str
        Hidden nonlinearity, only "relu"
    seed: int
        Seed the parameters were initialized with, kept for manifests
    """

    __slots__ = ["layer_sizes", "weights", "biases", "activation", "seed"]

    def __init__(self, layer_sizes, weights, biases, activation=ACTIVATION,
                 seed=None):
        self.layer_sizes = [int(s) for s in layer_sizes]
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.activation = activation
        self.seed = seed
        _check_congruent(self.layer_sizes, self.weights, self.biases)

    def __eq__(self, other):
        return (
            isinstance(other, NetworkParams)
            and self.layer_sizes == other.layer_sizes
            and self.activation == other.activation
            and all(
                np.array_equal(a, b)
                for a, b in zip(self.weights, other.weights)
            )
            and all(
                np.array_equal(a, b) for a, b in zip(self.biases, other.biases)
            )
        )

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def output_dim(self):
        return self.layer_sizes[-1]

    def copy(self):
        return NetworkParams(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            activation=self.activation,
            seed=self.seed,
        )

    def flatten(self):
        return _flatten(self.weights, self.biases)

    def is_finite(self):
        return all(np.all(np.isfinite(w)) for w in self.weights) and all(
            np.all(np.isfinite(b)) for b in self.biases
        )

    def save(self, stem, role="task", extra=None, trailer=None):
        """Write the parameters as a binary checkpoint with a manifest.

        Parameters
        ----------
        stem: str or pathlib.Path
            Path without suffix; '.bin' and '.manifest' are appended
        role: str
            'task' or 'grouper'
        extra: dict
            Additional manifest entries
        trailer: numpy.ndarray
            Values stored after the parameters (grouper feature statistics)
        """
        entries = {
            "role": role,
            "layer_sizes": self.layer_sizes,
            "activation": self.activation,
            "seed": self.seed,
            "n_params": self.n_params,
        }
        entries.update(extra or {})
        vector = self.flatten()
        if trailer is not None:
            vector = np.concatenate([vector, np.ravel(trailer)])
        storage.save_checkpoint(stem, vector, entries)

    @classmethod
    def from_flat(cls, layer_sizes, vector, activation=ACTIVATION, seed=None):
        vector = np.asarray(vector, dtype=np.float64).ravel()
        weights, biases = _unflatten([int(s) for s in layer_sizes], vector)
        return cls(layer_sizes, weights, biases, activation, seed)

    @classmethod
    def from_file(cls, stem):
        """Load a checkpoint written by `save`.

        Returns
        -------
        NetworkParams
            The parameters; any trailer values are ignored
        """
        params, _, _ = load_checkpoint(stem)
        return params


def load_checkpoint(stem):
    """Load a checkpoint together with its manifest and trailer.

    Returns
    -------
    tuple
        (NetworkParams, manifest dict, trailer numpy.ndarray)
    """
    vector, manifest = storage.load_checkpoint(stem)
    layer_sizes = [int(s) for s in manifest["layer_sizes"].split(",")]
    n_params = int(manifest["n_params"])
    seed = manifest.get("seed")
    params = NetworkParams.from_flat(
        layer_sizes,
        vector[:n_params],
        activation=manifest.get("activation", ACTIVATION),
        seed=None if seed in (None, "None") else int(seed),
    )
    return params, manifest, vector[n_params:]


class GradientSet(object):
    """Gradients shaped like the NetworkParams they were taken for."""

    __slots__ = ["layer_sizes", "weights", "biases"]

    def __init__(self, layer_sizes, weights, biases):
        self.layer_sizes = [int(s) for s in layer_sizes]
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        _check_congruent(self.layer_sizes, self.weights, self.biases)

    def flatten(self):
        return _flatten(self.weights, self.biases)

    def scaled(self, factor):
        return GradientSet(
            self.layer_sizes,
            [factor * w for w in self.weights],
            [factor * b for b in self.biases],
        )

    @classmethod
    def from_flat(cls, layer_sizes, vector):
        weights, biases = _unflatten(
            [int(s) for s in layer_sizes],
            np.asarray(vector, dtype=np.float64).ravel(),
        )
        return cls(layer_sizes, weights, biases)


class Batch(object):
    """A minibatch with per-example weights.

    Parameters
    ----------
    inputs: numpy.ndarray
        n x d inputs
    labels: numpy.ndarray
        n class ids
    example_weights: numpy.ndarray
        n nonnegative weights, 1/n each when omitted
    """

    __slots__ = ["inputs", "labels", "example_weights"]

    def __init__(self, inputs, labels, example_weights=None):
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[0] < 1:
            raise ShapeError(
                "inputs must be a nonempty n x d matrix, got {}".format(
                    inputs.shape
                )
            )
        n = inputs.shape[0]
        labels = np.asarray(labels, dtype=np.int64).ravel()
        if example_weights is None:
            example_weights = np.full(n, 1.0 / n)
        example_weights = np.asarray(example_weights, dtype=np.float64).ravel()
        if labels.shape != (n,) or example_weights.shape != (n,):
            raise ShapeError(
                "{} inputs, {} labels, {} weights".format(
                    n, labels.size, example_weights.size
                )
            )
        if np.any(labels < 0):
            raise ConfigurationError("labels must be nonnegative class ids")
        if not np.all(np.isfinite(example_weights)) or np.any(
            example_weights < 0
        ):
            raise ConfigurationError("example weights must be finite and >= 0")
        self.inputs = inputs
        self.labels = labels
        self.example_weights = example_weights

    def __len__(self):
        return self.inputs.shape[0]


def init_network(layer_sizes, seed=0):
    """Create parameters with uniform Glorot initialization and zero biases.

    Parameters
    ----------
    layer_sizes: list of int
        At least two positive sizes
    seed: int
        Seed for the weight draws

    Returns
    -------
    NetworkParams
    """
    if layer_sizes is None or len(layer_sizes) < 2:
        raise ConfigurationError(
            "need at least two layer sizes, got {}".format(layer_sizes)
        )
    if any(int(s) < 1 for s in layer_sizes):
        raise ConfigurationError(
            "layer sizes must be >= 1, got {}".format(layer_sizes)
        )
    layer_sizes = [int(s) for s in layer_sizes]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(layer_sizes, weights, biases, seed=seed)


def _check_inputs(params, inputs):
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim == 1:
        inputs = inputs.reshape(1, -1)
    if inputs.ndim != 2 or inputs.shape[1] != params.layer_sizes[0]:
        raise ShapeError(
            "inputs of shape {} for input dimension {}".format(
                inputs.shape, params.layer_sizes[0]
            )
        )
    return inputs


def _forward_trace(params, inputs):
    """Pre-activations of every layer and the input of every layer."""
    inputs = _check_inputs(params, inputs)
    pre_activations = []
    layer_inputs = [inputs]
    last = len(params.weights) - 1
    a = inputs
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        pre_activations.append(z)
        if l < last:
            a = np.maximum(z, 0.0)
            layer_inputs.append(a)
    return pre_activations, layer_inputs


def forward(params, inputs):
    """Run the network.

    Parameters
    ----------
    params: NetworkParams
    inputs: numpy.ndarray
        n x layer_sizes[0]

    Returns
    -------
    tuple
        (logits n x C, hidden n x H) where hidden is the input of the output
        layer, i.e. the last hidden activation (the inputs for one-layer nets)
    """
    pre_activations, layer_inputs = _forward_trace(params, inputs)
    return pre_activations[-1], layer_inputs[-1]


def predict(params, inputs):
    logits, _ = forward(params, inputs)
    return np.argmax(logits, axis=1)


def predict_proba(params, inputs):
    logits, _ = forward(params, inputs)
    return softmax(logits, axis=1)


def _check_labels(logits, labels):
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ShapeError("logits must be n x C, got {}".format(logits.shape))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.shape != (logits.shape[0],):
        raise ShapeError(
            "{} labels for {} logit rows".format(labels.size, logits.shape[0])
        )
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ConfigurationError(
            "labels must lie in [0, {})".format(logits.shape[1])
        )
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    return logits, labels


def weighted_ce_loss(logits, labels, example_weights):
    """Per-example softmax cross-entropy and its weighted sum.

    Parameters
    ----------
    logits: numpy.ndarray
        n x C
    labels: numpy.ndarray
        n class ids
    example_weights: numpy.ndarray
        n weights

    Returns
    -------
    tuple
        (per-example losses, sum_i w_i * loss_i)
    """
    logits, labels = _check_labels(logits, labels)
    example_weights = np.asarray(example_weights, dtype=np.float64).ravel()
    if example_weights.shape != labels.shape:
        raise ShapeError(
            "{} weights for {} examples".format(
                example_weights.size, labels.size
            )
        )
    losses = -log_softmax(logits, axis=1)[np.arange(labels.size), labels]
    return losses, float(np.dot(example_weights, losses))


def _backprop(params, pre_activations, layer_inputs, dlogits):
    n_layers = len(params.weights)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    dz = dlogits
    for l in reversed(range(n_layers)):
        grad_w[l] = dz.T @ layer_inputs[l]
        grad_b[l] = dz.sum(axis=0)
        if l > 0:
            dz = (dz @ params.weights[l]) * (pre_activations[l - 1] > 0)
    return GradientSet(params.layer_sizes, grad_w, grad_b)


def backward_from_logits(params, inputs, dlogits):
    """Backpropagate a gradient given with respect to the logits.

    Used by heads other than cross-entropy (grouper KL and adversary terms).
    """
    pre_activations, layer_inputs = _forward_trace(params, inputs)
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.shape != pre_activations[-1].shape:
        raise ShapeError(
            "logit gradient {} for logits {}".format(
                dlogits.shape, pre_activations[-1].shape
            )
        )
    return _backprop(params, pre_activations, layer_inputs, dlogits)


def backward(params, batch):
    """Exact gradient of the batch's weighted cross-entropy sum.

    Parameters
    ----------
    params: NetworkParams
    batch: Batch

    Returns
    -------
    GradientSet
    """
    pre_activations, layer_inputs = _forward_trace(params, batch.inputs)
    logits, labels = _check_labels(pre_activations[-1], batch.labels)
    dlogits = softmax(logits, axis=1)
    dlogits[np.arange(labels.size), labels] -= 1.0
    dlogits *= batch.example_weights[:, None]
    return _backprop(params, pre_activations, layer_inputs, dlogits)


def sgd_step(params, grads, lr, weight_decay=0.0, direction="descend"):
    """One gradient step with L2 weight decay.

    descend: p <- p - lr * (g + weight_decay * p)
    ascend:  p <- p + lr * (g - weight_decay * p)

    Returns
    -------
    NetworkParams
        New parameters; `params` is left untouched
    """
    if not lr > 0:
        raise ConfigurationError("lr must be > 0, got {}".format(lr))
    if weight_decay < 0:
        raise ConfigurationError(
            "weight_decay must be >= 0, got {}".format(weight_decay)
        )
    if direction not in DIRECTIONS:
        raise ConfigurationError(
            "direction must be one of {}, got {!r}".format(
                DIRECTIONS, direction
            )
        )
    if grads.layer_sizes != params.layer_sizes:
        raise ShapeError(
            "gradients for {} applied to {}".format(
                grads.layer_sizes, params.layer_sizes
            )
        )
    sign = 1.0 if direction == "ascend" else -1.0

    def step(p, g):
        return p + sign * lr * (g - sign * weight_decay * p)

    return NetworkParams(
        params.layer_sizes,
        [step(p, g) for p, g in zip(params.weights, grads.weights)],
        [step(p, g) for p, g in zip(params.biases, grads.biases)],
        activation=params.activation,
        seed=params.seed,
    )


def finite_diff_grad(params, batch, epsilon=1e-4, objective=None):
    """Central finite-difference estimate of the gradient.

    Parameters
    ----------
    params: NetworkParams
    batch: Batch
        Evaluated with the weighted cross-entropy sum when `objective` is None
    epsilon: float
        Step, must be > 0
    objective: callable
        Scalar function of NetworkParams to differentiate instead

    Returns
    -------
    GradientSet
    """
    if not epsilon > 0:
        raise ConfigurationError("epsilon must be > 0, got {}".format(epsilon))
    if objective is None:
        def objective(p):
            logits, _ = forward(p, batch.inputs)
            return weighted_ce_loss(
                logits, batch.labels, batch.example_weights
            )[1]

    flat = params.flatten()
    estimate = np.empty_like(flat)
    for j in range(flat.size):
        original = flat[j]
        flat[j] = original + epsilon
        up = objective(NetworkParams.from_flat(params.layer_sizes, flat))
        flat[j] = original - epsilon
        down = objective(NetworkParams.from_flat(params.layer_sizes, flat))
        flat[j] = original
        estimate[j] = (up - down) / (2.0 * epsilon)
    return GradientSet.from_flat(params.layer_sizes, estimate)


def relative_error(analytic, numeric, threshold=1e-6):
    """Largest relative difference over coordinates with magnitude > threshold.

    Returns
    -------
    float
        0.0 when no coordinate passes the threshold
    """
    a = analytic.flatten()
    b = numeric.flatten()
    scale = np.maximum(np.abs(a), np.abs(b))
    mask = scale > threshold
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(a[mask] - b[mask]) / scale[mask]))


def minibatches(n, batch_size, rng):
    """Yield index arrays of a fresh random permutation of range(n)."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]
