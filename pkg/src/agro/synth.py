"""Synthetic classification data with planted spurious attributes.

Every example carries a label y and, for each spurious attribute j, a feature
block whose mean points at y with probability rho_j and at another class
otherwise. The ground-truth group of an example is the mixed-radix code of
(y, a_1, ..., a_k) with a_j = 1 when block j agrees with y. Groups are for
evaluation only; training code receives a TrainingView, which has none.
"""
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.model_selection import KFold

from agro import storage
from agro.errors import ConfigurationError, MissingArtifactError, ShapeError

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test", "ood")


@dataclass
class SpuriousAttribute:
    """One planted attribute.

    `strength` of None means twice the core signal strength.
    """

    correlation: float = 0.95
    dim: int = 2
    strength: float = None


@dataclass
class GeneratorConfig:
    n_train: int = 10000
    n_dev: int = 2000
    n_test: int = 2000
    n_ood: int = 2000
    n_classes: int = 2
    d_core: int = 2
    d_noise: int = 4
    core_signal_strength: float = 0.5
    spurious_attrs: list = field(default_factory=lambda: [SpuriousAttribute()])
    label_noise: float = 0.0
    n_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        self.spurious_attrs = [
            a if isinstance(a, SpuriousAttribute) else SpuriousAttribute(**a)
            for a in self.spurious_attrs
        ]

    def validate(self):
        for name in ("n_train", "n_dev", "n_test", "n_ood"):
            if getattr(self, name) < 0:
                raise ConfigurationError("{} must be >= 0".format(name))
        if self.n_classes < 2:
            raise ConfigurationError("n_classes must be >= 2")
        if self.d_core < 1:
            raise ConfigurationError("d_core must be >= 1")
        if self.d_noise < 0:
            raise ConfigurationError("d_noise must be >= 0")
        if not 0.0 <= self.label_noise <= 1.0:
            raise ConfigurationError("label_noise must lie in [0, 1]")
        if self.n_folds < 2:
            raise ConfigurationError("n_folds must be >= 2")
        for j, attr in enumerate(self.spurious_attrs):
            if not 0.0 <= attr.correlation <= 1.0:
                raise ConfigurationError(
                    "spurious_attrs[{}].correlation must lie in [0, 1]"
                    .format(j)
                )
            if attr.dim < 1:
                raise ConfigurationError(
                    "spurious_attrs[{}].dim must be >= 1".format(j)
                )
        if self.d_core < self.n_classes:
            logger.warning(
                "d_core=%d < n_classes=%d: some class means coincide",
                self.d_core,
                self.n_classes,
            )
        return self

    @property
    def input_dim(self):
        return (
            self.d_core
            + sum(a.dim for a in self.spurious_attrs)
            + self.d_noise
        )

    @property
    def n_groups(self):
        return self.n_classes * 2 ** len(self.spurious_attrs)

    def spurious_strength(self, attr):
        if attr.strength is None:
            return 2.0 * self.core_signal_strength
        return attr.strength

    def to_dict(self):
        return asdict(self)

    def to_entries(self):
        entries = {
            k: v for k, v in self.to_dict().items() if k != "spurious_attrs"
        }
        for j, attr in enumerate(self.spurious_attrs):
            entries["spurious_{}_correlation".format(j)] = attr.correlation
            entries["spurious_{}_dim".format(j)] = attr.dim
            entries["spurious_{}_strength".format(j)] = attr.strength
        return entries

    @classmethod
    def from_entries(cls, entries):
        ints = ("n_train", "n_dev", "n_test", "n_ood", "n_classes", "d_core",
                "d_noise", "n_folds", "seed")
        floats = ("core_signal_strength", "label_noise")
        kwargs = {k: int(entries[k]) for k in ints if k in entries}
        kwargs.update({k: float(entries[k]) for k in floats if k in entries})
        attrs = []
        j = 0
        while "spurious_{}_correlation".format(j) in entries:
            strength = entries["spurious_{}_strength".format(j)]
            attrs.append(
                SpuriousAttribute(
                    correlation=float(
                        entries["spurious_{}_correlation".format(j)]
                    ),
                    dim=int(entries["spurious_{}_dim".format(j)]),
                    strength=None if strength == "None" else float(strength),
                )
            )
            j += 1
        return cls(spurious_attrs=attrs, **kwargs)


class Example(object):
    """One row of a split."""

    __slots__ = ["x", "y", "true_group", "fold"]

    def __init__(self, x, y, true_group, fold):
        self.x = x
        self.y = int(y)
        self.true_group = int(true_group)
        self.fold = int(fold)

    def __eq__(self, other):
        return (
            np.array_equal(self.x, other.x)
            and self.y == other.y
            and self.true_group == other.true_group
            and self.fold == other.fold
        )


class TrainingView(object):
    """Inputs, labels and folds of a split, without ground-truth groups.

    Parameters
    ----------
    inputs: numpy.ndarray
        n x d
    labels: numpy.ndarray
        n class ids
    folds: numpy.ndarray
        n fold ids
    n_classes: int
    """

    __slots__ = ["inputs", "labels", "folds", "n_classes"]

    def __init__(self, inputs, labels, folds, n_classes):
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.folds = np.asarray(folds, dtype=np.int64)
        self.n_classes = int(n_classes)
        if not (
            self.inputs.shape[0] == self.labels.size == self.folds.size
        ):
            raise ShapeError("inputs, labels and folds differ in length")

    def __len__(self):
        return self.labels.size

    @property
    def input_dim(self):
        return self.inputs.shape[1]

    def subset(self, index):
        return TrainingView(
            self.inputs[index],
            self.labels[index],
            self.folds[index],
            self.n_classes,
        )

    def with_labels(self, labels):
        return TrainingView(self.inputs, labels, self.folds, self.n_classes)


class Split(object):
    """A generated split with hidden ground-truth groups.

    Parameters
    ----------
    name: str
        'train', 'dev', 'test' or 'ood'
    inputs: numpy.ndarray
    labels: numpy.ndarray
    true_groups: numpy.ndarray
    folds: numpy.ndarray
    n_classes: int
    n_groups: int
    """

    __slots__ = [
        "name",
        "inputs",
        "labels",
        "true_groups",
        "folds",
        "n_classes",
        "n_groups",
    ]

    def __init__(self, name, inputs, labels, true_groups, folds, n_classes,
                 n_groups):
        self.name = name
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.true_groups = np.asarray(true_groups, dtype=np.int64)
        self.folds = np.asarray(folds, dtype=np.int64)
        self.n_classes = int(n_classes)
        self.n_groups = int(n_groups)

    def __len__(self):
        return self.labels.size

    def __getitem__(self, i):
        return Example(
            self.inputs[i], self.labels[i], self.true_groups[i], self.folds[i]
        )

    def __eq__(self, other):
        return (
            self.name == other.name
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.true_groups, other.true_groups)
            and np.array_equal(self.folds, other.folds)
        )

    def training_view(self):
        return TrainingView(
            self.inputs, self.labels, self.folds, self.n_classes
        )

    def group_counts(self):
        return np.bincount(self.true_groups, minlength=self.n_groups)

    def save(self, path):
        """Write the split as CSV: x_0..x_{d-1}, y, true_group, fold."""
        d = self.inputs.shape[1]
        header = ",".join(
            ["x_{}".format(j) for j in range(d)] + ["y", "true_group", "fold"]
        )
        table = np.column_stack(
            [self.inputs, self.labels, self.true_groups, self.folds]
        ).reshape(len(self), d + 3)
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(
            str(path),
            table,
            delimiter=",",
            header=header,
            comments="",
            fmt=["%.17g"] * d + ["%d"] * 3,
        )

    @classmethod
    def from_csv(cls, path, name, n_classes, n_groups):
        with open(str(path)) as fh:
            header = fh.readline().strip().split(",")
        d = len(header) - 3
        table = np.loadtxt(str(path), delimiter=",", skiprows=1, ndmin=2)
        table = table.reshape(-1, d + 3)
        return cls(
            name,
            table[:, :d],
            table[:, d].astype(np.int64),
            table[:, d + 1].astype(np.int64),
            table[:, d + 2].astype(np.int64),
            n_classes,
            n_groups,
        )


class DatasetBundle(object):
    """The four generated splits and the config that produced them."""

    __slots__ = ["train", "dev", "test", "ood", "config"]

    def __init__(self, train, dev, test, ood, config):
        self.train = train
        self.dev = dev
        self.test = test
        self.ood = ood
        self.config = config

    def __eq__(self, other):
        return all(
            getattr(self, s) == getattr(other, s) for s in SPLITS
        ) and self.config == other.config

    def split(self, name):
        if name not in SPLITS:
            raise ConfigurationError("unknown split {!r}".format(name))
        return getattr(self, name)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in SPLITS:
            self.split(name).save(directory / "{}.csv".format(name))
        storage.write_manifest(directory / "config.txt",
                               self.config.to_entries())

    @classmethod
    def from_directory(cls, directory):
        directory = Path(directory)
        expected = [directory / "config.txt"] + [
            directory / "{}.csv".format(s) for s in SPLITS
        ]
        missing = [p for p in expected if not p.exists()]
        if missing:
            raise MissingArtifactError(missing)
        config = GeneratorConfig.from_entries(
            storage.read_manifest(directory / "config.txt")
        )
        splits = [
            Split.from_csv(
                directory / "{}.csv".format(s),
                s,
                config.n_classes,
                config.n_groups,
            )
            for s in SPLITS
        ]
        return cls(*splits, config=config)


def _class_patterns(n_classes, dim):
    """+1/-1 mean pattern per class: +1 on dims j with j % C == c."""
    dims = np.arange(dim)[None, :] % n_classes
    return np.where(dims == np.arange(n_classes)[:, None], 1.0, -1.0)


def _other_class(classes, n_classes, rng):
    offset = rng.integers(1, n_classes, size=classes.size)
    return (classes + offset) % n_classes


def _generate_split(name, config, n, rng, reverse=False):
    C = config.n_classes
    y_clean = rng.integers(0, C, size=n)
    core = config.core_signal_strength * _class_patterns(C, config.d_core)[
        y_clean
    ] + rng.standard_normal((n, config.d_core))
    blocks = [core]
    attribute_classes = []
    for attr in config.spurious_attrs:
        rho = 1.0 - attr.correlation if reverse else attr.correlation
        aligned = rng.random(n) < rho
        classes = np.where(aligned, y_clean, _other_class(y_clean, C, rng))
        strength = config.spurious_strength(attr)
        blocks.append(
            strength * _class_patterns(C, attr.dim)[classes]
            + rng.standard_normal((n, attr.dim))
        )
        attribute_classes.append(classes)
    blocks.append(rng.standard_normal((n, config.d_noise)))

    labels = y_clean.copy()
    flip = rng.random(n) < config.label_noise
    labels[flip] = _other_class(y_clean, C, rng)[flip]

    groups = labels.copy()
    for classes in attribute_classes:
        groups = groups * 2 + (classes == labels)

    if n >= config.n_folds:
        folds = kfold_assign(n, config.n_folds, config.seed)
    else:
        folds = np.zeros(n, dtype=np.int64)
    return Split(
        name,
        np.hstack(blocks).reshape(n, config.input_dim),
        labels,
        groups,
        folds,
        C,
        config.n_groups,
    )


def generate(config):
    """Generate train, dev, test and OOD splits.

    Dev and test follow the training distribution; the OOD split replaces
    every correlation rho by 1 - rho.

    Parameters
    ----------
    config: GeneratorConfig

    Returns
    -------
    DatasetBundle
    """
    config.validate()
    streams = np.random.SeedSequence(config.seed).spawn(len(SPLITS))
    sizes = {
        "train": config.n_train,
        "dev": config.n_dev,
        "test": config.n_test,
        "ood": config.n_ood,
    }
    splits = [
        _generate_split(
            name,
            config,
            sizes[name],
            np.random.default_rng(stream),
            reverse=name == "ood",
        )
        for name, stream in zip(SPLITS, streams)
    ]
    logger.info(
        "generated %s examples, %d groups",
        "/".join(str(len(s)) for s in splits),
        config.n_groups,
    )
    return DatasetBundle(*splits, config=config)


def kfold_assign(n, K, seed=0):
    """Assign each of n examples to one of K folds of near-equal size.

    Parameters
    ----------
    n: int
    K: int
        2 <= K <= n
    seed: int

    Returns
    -------
    numpy.ndarray
        Fold id per example
    """
    if K < 2 or K > n:
        raise ConfigurationError(
            "need 2 <= K <= n, got K={} for n={}".format(K, n)
        )
    folds = np.empty(n, dtype=np.int64)
    splitter = KFold(n_splits=K, shuffle=True, random_state=seed)
    for k, (_, held_out) in enumerate(splitter.split(np.zeros((n, 1)))):
        folds[held_out] = k
    return folds


def group_accuracy_table(predictions, examples, n_groups=None):
    """Count and accuracy per ground-truth group.

    Parameters
    ----------
    predictions: numpy.ndarray
        Predicted class per example
    examples: Split or tuple
        A Split, or a (labels, true_groups) pair
    n_groups: int
        Number of groups to report, empty ones included; defaults to the
        split's group count or the largest group id + 1

    Returns
    -------
    dict
        group id -> (count, accuracy); accuracy is None for empty groups
    """
    if isinstance(examples, Split):
        labels, groups = examples.labels, examples.true_groups
        if n_groups is None:
            n_groups = examples.n_groups
    else:
        labels, groups = (np.asarray(a) for a in examples)
    predictions = np.asarray(predictions)
    if not predictions.size == labels.size == groups.size:
        raise ShapeError(
            "{} predictions for {} examples".format(
                predictions.size, labels.size
            )
        )
    if n_groups is None:
        n_groups = int(groups.max()) + 1 if groups.size else 0
    correct = predictions == labels
    table = {}
    for g in range(n_groups):
        member = groups == g
        count = int(member.sum())
        table[g] = (count, float(correct[member].mean()) if count else None)
    return table
