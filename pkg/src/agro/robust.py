"""Group-robust training: greedy G-DRO on hard groups and adversarial
group discovery (AGRO) on soft groups produced by a grouper network.

Both engines share one primary step. For a minibatch B with soft
assignment P the group losses L(g) = sum_i P[i, g] * l_i and proportions
sum_i P[i, g] / |B| update the running statistics, the greedy rule turns
them into group weights q, and the task model descends on
(1/|B|) sum_i (sum_g q(g) P[i, g]) l_i. Hard groups are one-hot rows of P.
"""
import logging
import warnings
from dataclasses import dataclass, replace

import numpy as np

from agro import erm, grouper as grouper_module, network, slices, storage
from agro.errors import (
    ConfigurationError,
    DegenerateAssignmentWarning,
    NumericError,
    ShapeError,
)

logger = logging.getLogger(__name__)

MODES = ("primary", "adversary")
SCHEDULES = ("rounds", "interleaved")


@dataclass
class AgroConfig:
    """Hyperparameters of the robust training loops.

    `m`, `batch_size` and `primary_epochs` may be left as None and are
    filled in by `resolved`: m = 2 * C, batch size 16 * m, and the ERM
    epoch budget.

    An adversary epoch is flagged as degenerate when, over the whole
    training set at its end, one group holds more than `collapse_share`
    of the mean assignment, or the groups explain less than
    `min_loss_separation` of the variance of the task model's losses.
    """

    alpha: float = 0.2
    m: int = None
    T1_epochs: int = 3
    T2_epochs: int = 1
    rounds: int = 1
    primary_epochs: int = None
    w: float = 0.1
    W: float = 1.0
    gamma_ema: float = 0.5
    lr_theta: float = 0.05
    lr_phi: float = 0.05
    weight_decay: float = 0.0
    batch_size: int = None
    seed: int = 0
    normalize_group_loss: bool = False
    collapse_share: float = 0.9
    min_loss_separation: float = 0.01
    schedule: str = "rounds"

    def resolved(self, n_classes, erm_epochs=10):
        m = self.m if self.m is not None else 2 * int(n_classes)
        return replace(
            self,
            m=m,
            batch_size=(
                self.batch_size if self.batch_size is not None else 16 * m
            ),
            primary_epochs=(
                self.primary_epochs
                if self.primary_epochs is not None
                else erm_epochs
            ),
        )

    def validate(self):
        if not 0 < self.alpha <= 1:
            raise ConfigurationError(
                "alpha must lie in (0, 1], got {}".format(self.alpha)
            )
        if self.m is not None and self.m < 1:
            raise ConfigurationError("m must be >= 1")
        if self.rounds < 1:
            raise ConfigurationError("rounds must be >= 1")
        for name in ("T1_epochs", "T2_epochs", "primary_epochs"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ConfigurationError("{} must be >= 0".format(name))
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not 0 < self.gamma_ema < 1:
            raise ConfigurationError("gamma_ema must lie in (0, 1)")
        if self.w < 0 or self.W < 0:
            raise ConfigurationError("w and W must be >= 0")
        if not (self.lr_theta > 0 and self.lr_phi > 0):
            raise ConfigurationError("learning rates must be > 0")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0")
        if not 0 < self.collapse_share <= 1:
            raise ConfigurationError("collapse_share must lie in (0, 1]")
        if not 0 <= self.min_loss_separation < 1:
            raise ConfigurationError(
                "min_loss_separation must lie in [0, 1)"
            )
        if self.schedule not in SCHEDULES:
            raise ConfigurationError(
                "schedule must be one of {}, got {!r}".format(
                    SCHEDULES, self.schedule
                )
            )
        return self


def ema(v_new, v_old, gamma_ema):
    """Exponential moving average gamma * v_new + (1 - gamma) * v_old."""
    if not 0 < gamma_ema < 1:
        raise ConfigurationError(
            "gamma_ema must lie in (0, 1), got {}".format(gamma_ema)
        )
    return gamma_ema * v_new + (1.0 - gamma_ema) * v_old


class GroupStats(object):
    """Historical group losses and proportions of the primary player.

    Parameters
    ----------
    L_hat: numpy.ndarray
    p_hat: numpy.ndarray
    gamma_ema: float
    """

    __slots__ = ["L_hat", "p_hat", "gamma_ema"]

    def __init__(self, L_hat, p_hat, gamma_ema=0.5):
        self.L_hat = np.asarray(L_hat, dtype=np.float64)
        self.p_hat = np.asarray(p_hat, dtype=np.float64)
        self.gamma_ema = gamma_ema

    @classmethod
    def zeros(cls, m, gamma_ema=0.5):
        return cls(np.zeros(m), np.zeros(m), gamma_ema)

    @property
    def m(self):
        return self.L_hat.size

    def copy(self):
        return GroupStats(self.L_hat.copy(), self.p_hat.copy(), self.gamma_ema)

    def update(self, L, props, present):
        """Fold one batch in; losses of groups absent from it are kept."""
        self.L_hat = np.where(
            present, ema(L, self.L_hat, self.gamma_ema), self.L_hat
        )
        self.p_hat = ema(props, self.p_hat, self.gamma_ema)


class WeightVector(object):
    """Group weights q and the worst set A they were built from."""

    __slots__ = ["q", "worst_set", "mode"]

    def __init__(self, q, worst_set, mode):
        self.q = q
        self.worst_set = worst_set
        self.mode = mode

    def __repr__(self):
        return "WeightVector(mode={!r}, worst_set={}, q={})".format(
            self.mode, self.worst_set, self.q.tolist()
        )


def compute_group_weights(L, p, alpha, mode="primary", w=0.1, W=1.0):
    """Greedy weights over the alpha-fraction of highest-loss groups.

    Groups are ranked by decreasing loss, smaller id first on ties. The
    worst set A is the shortest prefix of that ranking whose proportions
    reach alpha * sum(p); with all-zero proportions A holds the first
    group only.

    Parameters
    ----------
    L: numpy.ndarray
        m group losses
    p: numpy.ndarray
        m nonnegative group proportions
    alpha: float
        In (0, 1]
    mode: str
        'primary' gives q = 1/alpha on A and w elsewhere, 'adversary'
        gives q = alpha on A and W elsewhere
    w: float
    W: float

    Returns
    -------
    WeightVector
    """
    L = np.asarray(L, dtype=np.float64).ravel()
    p = np.asarray(p, dtype=np.float64).ravel()
    if L.shape != p.shape or L.size == 0:
        raise ShapeError(
            "{} losses for {} proportions".format(L.size, p.size)
        )
    if not 0 < alpha <= 1:
        raise ConfigurationError(
            "alpha must lie in (0, 1], got {}".format(alpha)
        )
    if mode not in MODES:
        raise ConfigurationError(
            "mode must be one of {}, got {!r}".format(MODES, mode)
        )
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ConfigurationError("proportions must be finite and >= 0")
    order = sorted(range(L.size), key=lambda g: (-L[g], g))
    total = p.sum()
    if total <= 0:
        worst = [order[0]]
    else:
        threshold = alpha * total - 1e-12 * total
        worst, covered = [], 0.0
        for g in order:
            worst.append(g)
            covered += p[g]
            if covered >= threshold:
                break
    in_worst = np.zeros(L.size, dtype=bool)
    in_worst[worst] = True
    if mode == "primary":
        q = np.where(in_worst, 1.0 / alpha, w)
    else:
        q = np.where(in_worst, alpha, W)
    return WeightVector(q, sorted(worst), mode)


def batch_group_stats(P, losses, normalize=False):
    """Per-group statistics of one minibatch.

    Returns
    -------
    tuple
        (group losses, proportions, mask of groups with positive mass)
    """
    P = np.asarray(P, dtype=np.float64)
    losses = np.asarray(losses, dtype=np.float64).ravel()
    n = losses.size
    if P.ndim != 2 or P.shape[0] != n:
        raise ShapeError(
            "assignment of shape {} for {} losses".format(P.shape, n)
        )
    mass = P.sum(axis=0)
    if abs(mass.sum() - n) > 1e-9 * max(1, n):
        raise NumericError(
            "group masses sum to {!r} for a batch of {}".format(
                mass.sum(), n
            )
        )
    L = P.T @ losses
    present = mass > 0
    if normalize:
        L = np.where(present, L / np.where(present, mass, 1.0), 0.0)
    return L, mass / n, present


class Trace(object):
    """Per-step record of group statistics, weights and batch losses."""

    __slots__ = ["m", "rows"]

    def __init__(self, m):
        self.m = m
        self.rows = []

    def __len__(self):
        return len(self.rows)

    def append(self, round_, mode, L, p, q, batch_loss):
        self.rows.append(
            [len(self.rows), round_, mode]
            + [float(v) for v in L]
            + [float(v) for v in p]
            + [float(v) for v in q]
            + [float(batch_loss)]
        )

    def header(self):
        groups = range(self.m)
        return (
            ["step", "round", "mode"]
            + ["L_hat_{}".format(g) for g in groups]
            + ["p_hat_{}".format(g) for g in groups]
            + ["q_{}".format(g) for g in groups]
            + ["batch_loss"]
        )

    def save(self, path):
        storage.write_csv(path, self.header(), self.rows)


class PhaseResult(object):
    """Outcome of one training phase.

    Parameters
    ----------
    params: NetworkParams or Grouper
        Updated player
    checkpoints: list
        Player after every epoch
    step_losses: list of float
        Weighted batch loss (primary) or objective (adversary) per step
    degenerate_epochs: list of int
        Adversary epochs flagged by the collapse detector
    transitions: list of numpy.ndarray
        Per adversary epoch, m x m counts of argmax group ids moving from
        the start to the end of the epoch
    """

    __slots__ = ["params", "checkpoints", "step_losses", "degenerate_epochs",
                 "transitions"]

    def __init__(self, params, checkpoints=None, step_losses=None,
                 degenerate_epochs=None, transitions=None):
        self.params = params
        self.checkpoints = checkpoints or []
        self.step_losses = step_losses or []
        self.degenerate_epochs = degenerate_epochs or []
        self.transitions = transitions or []


def _resolve(config, m, n_classes):
    if None in (config.m, config.batch_size, config.primary_epochs):
        config = replace(config, m=m).resolved(n_classes)
    return config.validate()


def _example_losses(theta, inputs, labels):
    logits, _ = network.forward(theta, inputs)
    losses, _ = network.weighted_ce_loss(
        logits, labels, np.zeros(labels.size)
    )
    return losses


def _primary_step(theta, inputs, labels, P, stats, config):
    n = labels.size
    try:
        losses = _example_losses(theta, inputs, labels)
    except NumericError:
        raise NumericError(
            "primary step diverged: non-finite logits with "
            "L_hat={} p_hat={}".format(
                stats.L_hat.tolist(), stats.p_hat.tolist()
            )
        )
    L, props, present = batch_group_stats(
        P, losses, config.normalize_group_loss
    )
    stats.update(L, props, present)
    weights = compute_group_weights(
        stats.L_hat, stats.p_hat, config.alpha, "primary", config.w, config.W
    )
    example_weights = (P @ weights.q) / n
    batch_loss = float(example_weights @ losses)
    if not np.isfinite(batch_loss):
        raise NumericError(
            "primary step diverged: loss {} with q={} L_hat={}".format(
                batch_loss, weights.q.tolist(), stats.L_hat.tolist()
            )
        )
    grads = network.backward(
        theta, network.Batch(inputs, labels, example_weights)
    )
    theta = network.sgd_step(
        theta, grads, config.lr_theta, config.weight_decay
    )
    return theta, batch_loss, weights


def _primary_pass(theta, P, view, stats, config, epochs, rng, round_, trace,
                  label):
    n = len(view)
    checkpoints, step_losses = [], []
    for epoch in range(epochs):
        for index in network.minibatches(n, config.batch_size, rng):
            theta, batch_loss, weights = _primary_step(
                theta,
                view.inputs[index],
                view.labels[index],
                P[index],
                stats,
                config,
            )
            step_losses.append(batch_loss)
            if trace is not None:
                trace.append(
                    round_, "primary", stats.L_hat, stats.p_hat, weights.q,
                    batch_loss,
                )
        checkpoints.append(theta)
        logger.info(
            "%s round %d epoch %d/%d, worst set %s, L_hat %s",
            label,
            round_,
            epoch + 1,
            epochs,
            weights.worst_set if step_losses else [],
            np.round(stats.L_hat, 4).tolist(),
        )
    return PhaseResult(theta, checkpoints, step_losses)


def gdro_train(view, groups, net_spec, config, n_groups=None,
               init_params=None, trace=None):
    """Greedy online G-DRO over hard group ids.

    Parameters
    ----------
    view: TrainingView
    groups: numpy.ndarray
        Group id of every training example (oracle groups, labels, or
        clusters)
    net_spec: NetSpec
    config: AgroConfig
        Resolved configuration; runs `primary_epochs` epochs
    n_groups: int
        Defaults to max(groups) + 1
    init_params: NetworkParams
    trace: Trace

    Returns
    -------
    PhaseResult
    """
    groups = np.asarray(groups, dtype=np.int64).ravel()
    if groups.shape != (len(view),):
        raise ShapeError(
            "{} group ids for {} examples".format(groups.size, len(view))
        )
    if groups.size and groups.min() < 0:
        raise ConfigurationError("group ids must be >= 0")
    m = int(n_groups if n_groups is not None else groups.max() + 1)
    if groups.size and groups.max() >= m:
        raise ConfigurationError(
            "group id {} with n_groups={}".format(groups.max(), m)
        )
    config = _resolve(config, m, view.n_classes)
    theta = init_params
    if theta is None:
        theta = network.init_network(
            net_spec.layer_sizes(view.input_dim, view.n_classes), config.seed
        )
    return _primary_pass(
        theta,
        np.eye(m)[groups],
        view,
        GroupStats.zeros(m, config.gamma_ema),
        config,
        config.primary_epochs,
        erm.shuffle_rng(config.seed),
        0,
        trace,
        "gdro",
    )


def agro_primary_epochs(theta, frozen_grouper, features, view, stats, config,
                        epochs=None, rng=None, round_=0, trace=None,
                        assignments=None):
    """Primary player: descend on the soft-group weighted loss.

    Parameters
    ----------
    theta: NetworkParams
    frozen_grouper: Grouper
        Supplies P; left untouched
    features: FeatureSet
        Grouper inputs aligned with `view`
    view: TrainingView
    stats: GroupStats
        Carried across minibatches and epochs, updated in place
    config: AgroConfig
    epochs: int
        Defaults to `config.primary_epochs`
    rng: numpy.random.Generator
        Minibatch order, defaults to the seeded shuffle stream
    round_: int
    trace: Trace
    assignments: numpy.ndarray
        Use this n x m assignment instead of the grouper's output

    Returns
    -------
    PhaseResult
    """
    if assignments is None:
        P = grouper_module.group_probs(frozen_grouper, features)
    else:
        P = np.asarray(assignments, dtype=np.float64)
    if P.shape[0] != len(view):
        raise ShapeError(
            "{} assignment rows for {} examples".format(P.shape[0], len(view))
        )
    if P.shape[1] != stats.m:
        raise ShapeError(
            "{} groups with statistics over {}".format(P.shape[1], stats.m)
        )
    config = _resolve(config, stats.m, view.n_classes)
    return _primary_pass(
        theta,
        P,
        view,
        stats,
        config,
        config.primary_epochs if epochs is None else epochs,
        rng if rng is not None else erm.shuffle_rng(config.seed),
        round_,
        trace,
        "agro primary",
    )


def _adversary_step(grouper, theta_losses, X, config):
    P = grouper_module.group_probs(grouper, X)
    L, props, _ = batch_group_stats(
        P, theta_losses, config.normalize_group_loss
    )
    weights = compute_group_weights(
        L, props, config.alpha, "adversary", config.w, config.W
    )
    objective, grads = grouper_module.soft_group_objective(
        grouper, X, theta_losses, weights.q
    )
    grouper = grouper.with_params(
        network.sgd_step(
            grouper.params,
            grads,
            config.lr_phi,
            config.weight_decay,
            direction="ascend",
        )
    )
    return grouper, objective, L, props, weights


def _transition_counts(before, after, m):
    counts = np.zeros((m, m), dtype=np.int64)
    np.add.at(counts, (before, after), 1)
    return counts


def degenerate_assignment(P, losses, config):
    """Reason why the assignment P reduces AGRO to ERM, or None.

    Parameters
    ----------
    P: numpy.ndarray
        n x m assignment over the whole training set
    losses: numpy.ndarray
        n per-example losses of the task model
    config: AgroConfig

    Returns
    -------
    str or None
    """
    P = np.asarray(P, dtype=np.float64)
    if P.shape[1] < 2:
        return None
    shares = grouper_module.group_shares(P)
    if shares.max() > config.collapse_share:
        return "group {} holds {:.3f} of the assignment".format(
            int(np.argmax(shares)), float(shares.max())
        )
    separation = grouper_module.loss_separation(P, losses)
    if separation < config.min_loss_separation:
        return "groups explain {:.4f} of the loss variance".format(
            separation
        )
    return None


def agro_adversary_epochs(frozen_theta, grouper, features, view, config,
                          epochs=None, rng=None, round_=0, trace=None,
                          full_batch=False):
    """Adversary player: ascend on the weighted soft-group loss.

    Per-example losses come from the frozen task model; group statistics
    are taken from each minibatch alone.

    Parameters
    ----------
    frozen_theta: NetworkParams
    grouper: Grouper
    features: FeatureSet
    view: TrainingView
    config: AgroConfig
    epochs: int
        Defaults to `config.T2_epochs`
    rng: numpy.random.Generator
    round_: int
    trace: Trace
    full_batch: bool
        One step per epoch over all examples

    Returns
    -------
    PhaseResult
        Its `params` is the updated Grouper
    """
    config = _resolve(config, grouper.m, view.n_classes)
    epochs = config.T2_epochs if epochs is None else epochs
    rng = rng if rng is not None else erm.shuffle_rng(config.seed)
    matrix = grouper_module.feature_matrix(features)
    n = len(view)
    if matrix.shape[0] != n:
        raise ShapeError(
            "{} feature rows for {} examples".format(matrix.shape[0], n)
        )
    losses = _example_losses(frozen_theta, view.inputs, view.labels)
    batch_size = n if full_batch else config.batch_size
    result = PhaseResult(grouper)
    for epoch in range(epochs):
        before = np.argmax(grouper_module.group_probs(grouper, matrix), axis=1)
        for index in network.minibatches(n, batch_size, rng):
            grouper, objective, L, props, weights = _adversary_step(
                grouper, losses[index], matrix[index], config
            )
            result.step_losses.append(objective)
            if trace is not None:
                trace.append(round_, "adversary", L, props, weights.q,
                             objective)
        P = grouper_module.group_probs(grouper, matrix)
        after = np.argmax(P, axis=1)
        result.transitions.append(_transition_counts(before, after, grouper.m))
        result.checkpoints.append(grouper)
        shares = np.bincount(after, minlength=grouper.m) / float(n)
        logger.info(
            "agro adversary round %d epoch %d/%d, argmax shares %s, "
            "%d examples changed group",
            round_,
            epoch + 1,
            epochs,
            np.round(shares, 3).tolist(),
            int(np.sum(before != after)),
        )
        reason = degenerate_assignment(P, losses, config)
        if reason is not None:
            result.degenerate_epochs.append(epoch)
            logger.warning("adversary epoch %d: %s", epoch, reason)
            warnings.warn(
                "degenerate group assignment in adversary epoch {}: "
                "{}".format(epoch, reason),
                DegenerateAssignmentWarning,
            )
    result.params = grouper
    return result


def agro_interleaved_epochs(theta, grouper, features, view, stats, config,
                            epochs=None, rng=None, round_=0, trace=None):
    """Alternate one primary and one adversary step on every minibatch.

    The adversary step on a minibatch uses losses of the task model that
    the primary step on that minibatch just produced.

    Returns
    -------
    tuple
        (PhaseResult for the task model, PhaseResult for the grouper)
    """
    config = _resolve(config, grouper.m, view.n_classes)
    epochs = config.primary_epochs if epochs is None else epochs
    rng = rng if rng is not None else erm.shuffle_rng(config.seed)
    matrix = grouper_module.feature_matrix(features)
    n = len(view)
    primary = PhaseResult(theta)
    adversary = PhaseResult(grouper)
    for epoch in range(epochs):
        for index in network.minibatches(n, config.batch_size, rng):
            inputs, labels = view.inputs[index], view.labels[index]
            P = grouper_module.group_probs(grouper, matrix[index])
            theta, batch_loss, weights = _primary_step(
                theta, inputs, labels, P, stats, config
            )
            primary.step_losses.append(batch_loss)
            if trace is not None:
                trace.append(round_, "primary", stats.L_hat, stats.p_hat,
                             weights.q, batch_loss)
            grouper, objective, L, props, weights = _adversary_step(
                grouper,
                _example_losses(theta, inputs, labels),
                matrix[index],
                config,
            )
            adversary.step_losses.append(objective)
            if trace is not None:
                trace.append(round_, "adversary", L, props, weights.q,
                             objective)
        primary.checkpoints.append(theta)
        adversary.checkpoints.append(grouper)
        logger.info(
            "agro interleaved epoch %d/%d, L_hat %s",
            epoch + 1,
            epochs,
            np.round(stats.L_hat, 4).tolist(),
        )
    primary.params = theta
    adversary.params = grouper
    return primary, adversary


class AgroResult(object):
    """Everything `agro_train` produced.

    Parameters
    ----------
    theta: NetworkParams
        Final task model
    grouper: Grouper
        Final grouper
    checkpoints: list of NetworkParams
        Task model after every epoch of the last primary phase
    trace: Trace
    features: FeatureSet
    slice_model: SliceModel
    pretrained_grouper: Grouper
    round0: PhaseResult
    adversary: list of PhaseResult
        One per round
    """

    __slots__ = ["theta", "grouper", "checkpoints", "trace", "features",
                 "slice_model", "pretrained_grouper", "round0", "adversary"]

    def __init__(self, **kwargs):
        for name in self.__slots__:
            setattr(self, name, kwargs.get(name))


def agro_train(view, net_spec, config, erm_config=None, slice_config=None,
               grouper_config=None, kfold=5, analog=None, features=None,
               slice_model=None, pretrained_grouper=None):
    """Run adversarial group discovery end to end.

    Round 0 trains the task model for T1 epochs against a randomly
    initialized grouper. Missing inputs are then produced: K-fold
    features, the slice model and the grouper pretrained on its
    responsibilities. Each of the R rounds runs the adversary for T2
    epochs with the task model frozen and then the primary player for the
    ERM epoch budget with the grouper frozen; group statistics restart
    every round. With schedule='interleaved' the rounds are replaced by
    per-minibatch alternation.

    Features, slice model and pretrained grouper are built once before
    round 1 and reused by every later round; with R > 1 the grouper
    keeps training on the same feature matrix and nothing is
    re-extracted from the updated task model.

    Parameters
    ----------
    view: TrainingView
    net_spec: NetSpec
    config: AgroConfig
    erm_config: TrainConfig
        Fold models of the feature pipeline, and the default epoch budget
    slice_config: SliceConfig
    grouper_config: GrouperConfig
    kfold: int
    analog: PretrainedAnalog
    features: FeatureSet
        Precomputed training features
    slice_model: SliceModel
        Precomputed slice model, used when no grouper is given
    pretrained_grouper: Grouper

    Returns
    -------
    AgroResult
    """
    erm_config = erm_config or erm.TrainConfig(seed=config.seed)
    slice_config = slice_config or slices.SliceConfig(seed=config.seed)
    grouper_config = grouper_config or grouper_module.GrouperConfig(
        seed=config.seed
    )
    config = config.resolved(view.n_classes, erm_config.epochs).validate()
    grouper_config.validate()
    if analog is None:
        analog = erm.PretrainedAnalog(view.input_dim, seed=config.seed)
    if features is None:
        features = erm.extract_features_kfold(
            view, kfold, net_spec, erm_config, analog
        )
    if len(features) != len(view):
        raise ShapeError(
            "{} feature rows for {} examples".format(len(features), len(view))
        )
    if pretrained_grouper is None:
        if slice_model is None:
            slice_model, responsibilities = slices.fit_slices(
                features, config.m, slice_config
            )
        else:
            responsibilities = slice_model.predict(features)
        pretrained_grouper, _ = grouper_module.pretrain_kl(
            grouper_module.init_grouper(
                features.dim,
                config.m,
                grouper_config.hidden,
                grouper_config.seed,
                features,
                grouper_config.standardize,
            ),
            features,
            responsibilities,
            grouper_config.epochs,
            grouper_config.batch_size,
            grouper_config.lr,
            grouper_config.seed,
            grouper_config.weight_decay,
        )
    if pretrained_grouper.m != config.m:
        raise ConfigurationError(
            "grouper has {} groups, config asks for m={}".format(
                pretrained_grouper.m, config.m
            )
        )

    rng = erm.shuffle_rng(config.seed)
    trace = Trace(config.m)
    theta = network.init_network(
        net_spec.layer_sizes(view.input_dim, view.n_classes), config.seed
    )
    random_grouper = grouper_module.init_grouper(
        features.dim,
        config.m,
        grouper_config.hidden,
        config.seed + 1,
        features,
        grouper_config.standardize,
    )
    round0 = agro_primary_epochs(
        theta,
        random_grouper,
        features,
        view,
        GroupStats.zeros(config.m, config.gamma_ema),
        config,
        epochs=config.T1_epochs,
        rng=rng,
        round_=0,
        trace=trace,
    )
    theta = round0.params
    grouper = pretrained_grouper
    adversary_results = []
    checkpoints = []
    if config.schedule == "interleaved":
        primary, adversary = agro_interleaved_epochs(
            theta,
            grouper,
            features,
            view,
            GroupStats.zeros(config.m, config.gamma_ema),
            config,
            rng=rng,
            round_=1,
            trace=trace,
        )
        theta, grouper = primary.params, adversary.params
        checkpoints = primary.checkpoints
        adversary_results.append(adversary)
    else:
        for r in range(1, config.rounds + 1):
            adversary = agro_adversary_epochs(
                theta, grouper, features, view, config, rng=rng, round_=r,
                trace=trace,
            )
            grouper = adversary.params
            adversary_results.append(adversary)
            primary = agro_primary_epochs(
                theta,
                grouper,
                features,
                view,
                GroupStats.zeros(config.m, config.gamma_ema),
                config,
                rng=rng,
                round_=r,
                trace=trace,
            )
            theta = primary.params
            checkpoints = primary.checkpoints
    return AgroResult(
        theta=theta,
        grouper=grouper,
        checkpoints=checkpoints,
        trace=trace,
        features=features,
        slice_model=slice_model,
        pretrained_grouper=pretrained_grouper,
        round0=round0,
        adversary=adversary_results,
    )
