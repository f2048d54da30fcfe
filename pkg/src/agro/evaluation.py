import logging
from dataclasses import dataclass

import numpy as np

from agro import erm, grouper as grouper_module, network
from agro.errors import ConfigurationError, ShapeError
from agro.synth import group_accuracy_table

logger = logging.getLogger(__name__)

SELECTION_MODES = ("predicted", "average", "known_group")
SUMMARY_METRICS = ("avg_accuracy", "worst_group_accuracy", "ood_accuracy",
                   "selection_score")


@dataclass
class SelectionConfig:
    """How a checkpoint is picked on the dev split.

    `alpha` None reuses the training alpha. `known_group` is a true group
    id or a list of them; None means every group present in the training
    split, so the score is the worst-group dev accuracy.
    """

    mode: str = "predicted"
    alpha: float = None
    known_group: object = None

    def validate(self):
        if self.mode not in SELECTION_MODES:
            raise ConfigurationError(
                "selection mode must be one of {}, got {!r}".format(
                    SELECTION_MODES, self.mode
                )
            )
        if self.alpha is not None and not 0 < self.alpha <= 1:
            raise ConfigurationError("selection alpha must lie in (0, 1]")
        return self


class MetricsReport(object):
    """Accuracy report of one model on one split.

    Parameters
    ----------
    split: str
    avg_accuracy: float
    group_table: dict
        {group: (count, accuracy or None)}, empty without true groups
    ood_accuracy: float
    selected_checkpoint: int
    selection_score: float
    """

    __slots__ = ["split", "avg_accuracy", "group_table", "ood_accuracy",
                 "selected_checkpoint", "selection_score"]

    def __init__(self, split, avg_accuracy, group_table=None,
                 ood_accuracy=None, selected_checkpoint=None,
                 selection_score=None):
        self.split = split
        self.avg_accuracy = avg_accuracy
        self.group_table = group_table or {}
        self.ood_accuracy = ood_accuracy
        self.selected_checkpoint = selected_checkpoint
        self.selection_score = selection_score

    @property
    def worst_group(self):
        """Nonempty true group with the lowest accuracy, smaller id on ties."""
        scored = [
            (acc, g) for g, (count, acc) in self.group_table.items() if count
        ]
        if not scored:
            return None
        return min(scored)[1]

    @property
    def worst_group_accuracy(self):
        g = self.worst_group
        return None if g is None else self.group_table[g][1]

    def to_dict(self):
        return {
            "split": self.split,
            "avg_accuracy": self.avg_accuracy,
            "per_group": {
                str(g): {"count": count, "accuracy": acc}
                for g, (count, acc) in sorted(self.group_table.items())
            },
            "worst_group": self.worst_group,
            "worst_group_accuracy": self.worst_group_accuracy,
            "ood_accuracy": self.ood_accuracy,
            "selected_checkpoint": self.selected_checkpoint,
            "selection_score": self.selection_score,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["split"],
            data["avg_accuracy"],
            {
                int(g): (row["count"], row["accuracy"])
                for g, row in data.get("per_group", {}).items()
            },
            data.get("ood_accuracy"),
            data.get("selected_checkpoint"),
            data.get("selection_score"),
        )


def evaluate(theta, split, true_groups=True):
    """Accuracy of a task model, per true group when the split has them.

    Parameters
    ----------
    theta: NetworkParams
    split: Split or TrainingView
    true_groups: bool
        Report the per-group table; ignored for splits without groups

    Returns
    -------
    MetricsReport
    """
    if len(split) == 0:
        raise ConfigurationError("cannot evaluate on an empty split")
    predictions = network.predict(theta, split.inputs)
    avg = float(np.mean(predictions == split.labels))
    table = {}
    if true_groups and getattr(split, "true_groups", None) is not None:
        table = group_accuracy_table(predictions, split)
    return MetricsReport(getattr(split, "name", "view"), avg, table)


def selection_score(predictions, labels, groups, alpha):
    """Combined accuracy of the alpha-fraction of lowest-accuracy groups.

    Groups without examples are skipped; the shortest prefix of groups in
    ascending accuracy (smaller id on ties) covering at least alpha of the
    examples is pooled.

    Returns
    -------
    tuple
        (score, list of group ids in the prefix)
    """
    if not 0 < alpha <= 1:
        raise ConfigurationError(
            "alpha must lie in (0, 1], got {}".format(alpha)
        )
    predictions = np.asarray(predictions).ravel()
    labels = np.asarray(labels).ravel()
    groups = np.asarray(groups, dtype=np.int64).ravel()
    if not predictions.shape == labels.shape == groups.shape:
        raise ShapeError("predictions, labels and groups must align")
    n = labels.size
    if n == 0:
        raise ConfigurationError("cannot score an empty split")
    correct = predictions == labels
    ranked = []
    for g in np.unique(groups):
        member = groups == g
        ranked.append((float(correct[member].mean()), int(g)))
    ranked.sort()
    chosen, covered, hits = [], 0, 0
    for _, g in ranked:
        member = groups == g
        chosen.append(g)
        covered += int(member.sum())
        hits += int(correct[member].sum())
        if covered >= alpha * n - 1e-9:
            break
    return hits / float(covered), chosen


def select_checkpoint(checkpoints, grouper, dev_features, dev_split, alpha,
                      mode="predicted", known_group=None, analog=None):
    """Pick the checkpoint that scores best on the dev split.

    Parameters
    ----------
    checkpoints: list of NetworkParams
    grouper: Grouper
        Assigns dev examples to predicted groups (mode 'predicted')
    dev_features: list of FeatureSet
        Grouper inputs of the dev split, one per checkpoint; computed with
        `analog` when None
    dev_split: Split
    alpha: float
    mode: str
        'predicted' scores the alpha-worst predicted groups, 'average'
        the whole dev split, 'known_group' the worst of the true groups
        in `known_group`
    known_group: int or list of int
    analog: PretrainedAnalog

    Returns
    -------
    tuple
        (index of the chosen checkpoint, list of scores); ties go to the
        earliest checkpoint
    """
    if not checkpoints:
        raise ConfigurationError("no checkpoints to select from")
    if mode not in SELECTION_MODES:
        raise ConfigurationError(
            "selection mode must be one of {}, got {!r}".format(
                SELECTION_MODES, mode
            )
        )
    if mode == "known_group":
        if known_group is None:
            raise ConfigurationError("known_group selection needs a group id")
        known = np.atleast_1d(np.asarray(known_group, dtype=np.int64))
        members = [dev_split.true_groups == g for g in known]
        for g, member in zip(known, members):
            if not np.any(member):
                raise ConfigurationError(
                    "group {} has no dev examples".format(g)
                )
    if mode == "predicted":
        if grouper is None:
            raise ConfigurationError(
                "predicted-group selection needs a grouper"
            )
        if dev_features is None:
            if analog is None:
                raise ConfigurationError(
                    "need dev features or a projection to compute them"
                )
            dev_features = [
                erm.features_from_model(
                    theta,
                    dev_split.inputs,
                    dev_split.labels,
                    dev_split.n_classes,
                    analog,
                )
                for theta in checkpoints
            ]
        if len(dev_features) != len(checkpoints):
            raise ShapeError(
                "{} feature sets for {} checkpoints".format(
                    len(dev_features), len(checkpoints)
                )
            )
    scores = []
    for i, theta in enumerate(checkpoints):
        predictions = network.predict(theta, dev_split.inputs)
        if mode == "average":
            score = float(np.mean(predictions == dev_split.labels))
        elif mode == "known_group":
            score = min(
                float(np.mean(predictions[m] == dev_split.labels[m]))
                for m in members
            )
        else:
            groups = np.argmax(
                grouper_module.group_probs(grouper, dev_features[i]), axis=1
            )
            score, _ = selection_score(
                predictions, dev_split.labels, groups, alpha
            )
        scores.append(score)
        logger.debug("checkpoint %d selection score %.4f", i, score)
    best = int(np.argmax(scores))
    logger.info(
        "selected checkpoint %d (%s score %.4f)", best, mode, scores[best]
    )
    return best, scores


def summarize(reports, metrics=SUMMARY_METRICS):
    """Mean and standard deviation of each metric across seeds.

    Parameters
    ----------
    reports: list of dict
        Flat metric dictionaries, e.g. MetricsReport.to_dict(); None
        values are left out
    metrics: tuple of str

    Returns
    -------
    dict
        {metric: {"mean": float, "std": float, "n": int}}
    """
    summary = {}
    for name in metrics:
        values = [r[name] for r in reports if r.get(name) is not None]
        if not values:
            continue
        summary[name] = {
            "mean": float(np.mean(values)),
            "std": float(np.std(values)),
            "n": len(values),
        }
    return summary
