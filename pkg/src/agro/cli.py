"""Command-line driver for reproducible, resumable experiments.

Every command works inside one run directory,
<runs_root>/<run_id>/seed-<seed>/, reads the artifacts earlier stages left
there and writes its own together with a '<stage>.stage.json' provenance
record.
"""
import argparse
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from agro import erm, evaluation, grouper as grouper_module, robust, slices
from agro import storage, synth
from agro.erm import NetSpec, TrainConfig
from agro.errors import AgroError, ConfigurationError, MissingArtifactError
from agro.evaluation import SelectionConfig
from agro.grouper import GrouperConfig
from agro.network import NetworkParams
from agro.robust import AgroConfig
from agro.slices import SliceConfig
from agro.synth import GeneratorConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_MISSING = 2
EXIT_CONFIG = 3

DATA_FILES = ["data/config.txt"] + [
    "data/{}.csv".format(s) for s in synth.SPLITS
]
FEATURES = "features/features"
SLICES = "slices/slices"
PRETRAINED_GROUPER = "grouper/grouper-pretrained"
FINAL_GROUPER = "agro/grouper-final"
GROUPINGS = ("oracle", "labels", "slices", "clusters")
METHODS = ("erm", "agro") + tuple("gdro-{}".format(g) for g in GROUPINGS)
DEFAULT_SELECTION = {"erm": "average", "gdro-oracle": "known_group"}
SWEEP_PARAMS = {
    "alpha": ("agro", "alpha", float),
    "m": ("agro", "m", int),
    "T2": ("agro", "T2_epochs", int),
    "lr": ("agro", "lr_theta", float),
    "weight_decay": ("agro", "weight_decay", float),
    "hidden": ("net", "hidden_sizes", int),
    "grouper_hidden": ("grouper", "hidden", int),
}
SEEDED_SECTIONS = ("data", "erm", "agro", "gdro", "slices", "grouper")


@dataclass
class ExperimentConfig:
    """All settings of an experiment, one section per component."""

    run_id: str = "default"
    seed: int = 0
    analog_dim: int = 16
    data: GeneratorConfig = field(default_factory=GeneratorConfig)
    net: NetSpec = field(default_factory=NetSpec)
    erm: TrainConfig = field(default_factory=TrainConfig)
    agro: AgroConfig = field(default_factory=AgroConfig)
    gdro: AgroConfig = field(
        default_factory=lambda: AgroConfig(normalize_group_loss=True)
    )
    slices: SliceConfig = field(default_factory=SliceConfig)
    grouper: GrouperConfig = field(default_factory=GrouperConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)

    def for_seed(self, seed):
        """Copy with the run seed propagated to every seeded section."""
        sections = {
            name: replace(getattr(self, name), seed=int(seed))
            for name in SEEDED_SECTIONS
        }
        return replace(self, seed=int(seed), **sections)

    def resolved_agro(self):
        return self.agro.resolved(self.data.n_classes, self.erm.epochs)

    def resolved_gdro(self):
        return self.gdro.resolved(self.data.n_classes, self.erm.epochs)

    def validate(self):
        if self.analog_dim < 0:
            raise ConfigurationError("analog_dim must be >= 0")
        if not str(self.run_id) or "/" in str(self.run_id):
            raise ConfigurationError(
                "run_id must be a nonempty name, got {!r}".format(self.run_id)
            )
        for name in SECTIONS:
            getattr(self, name).validate()
        self.resolved_agro().validate()
        self.resolved_gdro().validate()
        return self

    def to_dict(self):
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, data):
        kwargs = {}
        for key, value in data.items():
            if key in SECTIONS:
                kwargs[key] = _build_section(key, value)
            elif key in ("seed", "analog_dim"):
                kwargs[key] = _coerce(key, TOP_LEVEL[key], value)
            elif key == "run_id":
                kwargs[key] = value
            else:
                raise ConfigurationError("unknown config key {!r}".format(key))
        try:
            config = cls(**kwargs)
        except TypeError as exc:
            raise ConfigurationError(str(exc))
        return config.for_seed(config.seed)


SECTIONS = {
    "data": GeneratorConfig,
    "net": NetSpec,
    "erm": TrainConfig,
    "agro": AgroConfig,
    "gdro": AgroConfig,
    "slices": SliceConfig,
    "grouper": GrouperConfig,
    "selection": SelectionConfig,
}
TOP_LEVEL = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(key, f, value):
    if value is None:
        if f.default is None:
            return value
        raise ConfigurationError("{} must not be null".format(key))
    if f.type is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(
                "{} must be true or false, got {!r}".format(key, value)
            )
    elif f.type in (int, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(
                "{} must be a number, got {!r}".format(key, value)
            )
        if f.type is int:
            if value != int(value):
                raise ConfigurationError(
                    "{} must be an integer, got {!r}".format(key, value)
                )
            value = int(value)
    elif f.type is str and not isinstance(value, str):
        raise ConfigurationError(
            "{} must be a string, got {!r}".format(key, value)
        )
    return value


def _build_section(name, values):
    if not isinstance(values, dict):
        raise ConfigurationError(
            "config section {!r} must be an object".format(name)
        )
    cls = SECTIONS[name]
    known = {f.name: f for f in fields(cls)}
    values = dict(values)
    for key in values:
        if key not in known:
            raise ConfigurationError(
                "unknown config key {!r}".format("{}.{}".format(name, key))
            )
        values[key] = _coerce(
            "{}.{}".format(name, key), known[key], values[key]
        )
    if "hidden_sizes" in values:
        hidden = values["hidden_sizes"]
        values["hidden_sizes"] = tuple(
            hidden if isinstance(hidden, (list, tuple)) else [hidden]
        )
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError("section {!r}: {}".format(name, exc))


def _parse_override(text):
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigurationError(
            "override {!r} is not of the form section.field=value".format(text)
        )
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return key.split("."), value


def load_config(path=None, overrides=(), run_id=None, seed=None):
    """Read an experiment config and apply command-line overrides.

    Parameters
    ----------
    path: str
        JSON file; None gives the defaults
    overrides: list of str
        'section.field=value' or 'field=value' items, values parsed as JSON
        when possible
    run_id: str
    seed: int

    Returns
    -------
    ExperimentConfig
    """
    data = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError([path])
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(
                "{} line {} column {}: {}".format(
                    path, exc.lineno, exc.colno, exc.msg
                )
            )
        if not isinstance(data, dict):
            raise ConfigurationError("{} must hold a JSON object".format(path))
    for text in overrides or ():
        keys, value = _parse_override(text)
        if len(keys) == 1:
            data[keys[0]] = value
        elif len(keys) == 2:
            section = data.setdefault(keys[0], {})
            if not isinstance(section, dict):
                raise ConfigurationError(
                    "cannot override {!r}".format(text)
                )
            section[keys[1]] = value
        else:
            raise ConfigurationError(
                "override key {!r} is nested too deeply".format(text)
            )
    if run_id is not None:
        data["run_id"] = run_id
    if seed is not None:
        data["seed"] = seed
    try:
        return ExperimentConfig.from_dict(data).validate()
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc))


def _finish(store, stage, inputs, config, started):
    storage.write_json(store.path("config.json"), config.to_dict())
    store.write_stage_manifest(
        stage, inputs, config.to_dict(), time.perf_counter() - started
    )
    logger.info("%s finished in %s", stage, store.directory)


def _load_bundle(store):
    store.require(*DATA_FILES)
    return synth.DatasetBundle.from_directory(store.path("data"))


def _analog(config, input_dim):
    return erm.PretrainedAnalog(input_dim, config.analog_dim, config.seed)


def _checkpoint_name(epoch):
    return "theta-epoch-{:03d}".format(epoch)


def _save_checkpoints(store, directory, checkpoints):
    target = store.ensure(directory)
    for stale in target.glob("theta-epoch-*"):
        stale.unlink()
    for epoch, theta in enumerate(checkpoints, start=1):
        theta.save(target / _checkpoint_name(epoch))
    return [
        "{}/{}.bin".format(directory, _checkpoint_name(e))
        for e in range(1, len(checkpoints) + 1)
    ]


def _load_checkpoints(store, directory):
    stems = sorted(
        p.with_suffix("")
        for p in store.path(directory).glob("theta-epoch-*.manifest")
    )
    if not stems:
        raise MissingArtifactError(
            [store.path(directory, _checkpoint_name(1) + ".bin")]
        )
    return [NetworkParams.from_file(stem) for stem in stems]


def _method_dir(method):
    if method == "gdro":
        method = "gdro-oracle"
    if method not in METHODS:
        raise ConfigurationError(
            "unknown method {!r}, expected one of {}".format(method, METHODS)
        )
    return method


def _known_groups(train):
    return np.flatnonzero(train.group_counts()).tolist()


def cmd_generate(config, store):
    started = time.perf_counter()
    bundle = synth.generate(config.data)
    bundle.save(store.path("data"))
    _finish(store, "generate", [], config, started)
    return bundle


def cmd_train_erm(config, store):
    started = time.perf_counter()
    bundle = _load_bundle(store)
    result = erm.train_erm(
        bundle.train.training_view(), config.net, config.erm
    )
    _save_checkpoints(store, "erm", result.checkpoints)
    storage.write_csv(
        store.path("erm", "losses.csv"),
        ["epoch", "loss"],
        enumerate(result.epoch_losses, start=1),
    )
    _finish(store, "train-erm", DATA_FILES, config, started)
    return result


def cmd_extract_features(config, store):
    started = time.perf_counter()
    bundle = _load_bundle(store)
    view = bundle.train.training_view()
    features = erm.extract_features_kfold(
        view,
        config.data.n_folds,
        config.net,
        config.erm,
        _analog(config, view.input_dim),
    )
    features.save(
        store.path(FEATURES),
        seeds={"seed": config.seed, "analog_dim": config.analog_dim},
    )
    _finish(store, "extract-features", DATA_FILES, config, started)
    return features


def _load_features(store):
    store.require(FEATURES + ".bin", FEATURES + ".manifest")
    return erm.FeatureSet.from_file(store.path(FEATURES))


def cmd_fit_slices(config, store):
    started = time.perf_counter()
    features = _load_features(store)
    model, resp = slices.fit_slices(
        features, config.resolved_agro().m, config.slices
    )
    model.save(store.path(SLICES))
    rows = slices.slice_report(resp, features.labels, features.predictions)
    header = ["slice", "size", "top_y", "top_yhat", "top_pair_share",
              "error_rate"]
    storage.write_csv(
        store.path("slices", "slices-report.csv"),
        header,
        ([row[h] for h in header] for row in rows),
    )
    _finish(store, "fit-slices", [FEATURES + ".bin"], config, started)
    return model


def _load_slice_model(store):
    store.require(SLICES + ".bin", SLICES + ".manifest")
    return slices.SliceModel.from_file(store.path(SLICES))


def cmd_pretrain_grouper(config, store):
    started = time.perf_counter()
    features = _load_features(store)
    model = _load_slice_model(store)
    gcfg = config.grouper
    grouper, trace = grouper_module.pretrain_kl(
        grouper_module.init_grouper(
            features.dim,
            config.resolved_agro().m,
            gcfg.hidden,
            gcfg.seed,
            features,
            gcfg.standardize,
        ),
        features,
        model.predict(features),
        gcfg.epochs,
        gcfg.batch_size,
        gcfg.lr,
        gcfg.seed,
        gcfg.weight_decay,
    )
    grouper.save(store.path(PRETRAINED_GROUPER))
    storage.write_csv(
        store.path("grouper", "kl-trace.csv"),
        ["epoch", "kl"],
        enumerate(trace),
    )
    P = grouper_module.group_probs(grouper, features)
    logger.info(
        "pretrained grouper: entropy %.4f, argmax shares %s",
        grouper_module.assignment_entropy(P),
        np.round(
            np.bincount(np.argmax(P, axis=1), minlength=grouper.m) / len(P), 3
        ).tolist(),
    )
    _finish(
        store,
        "pretrain-grouper",
        [FEATURES + ".bin", SLICES + ".bin"],
        config,
        started,
    )
    return grouper


def cmd_train_gdro(config, store, groups="oracle"):
    """G-DRO baseline over oracle groups, labels, slices or plain clusters."""
    if groups not in GROUPINGS:
        raise ConfigurationError(
            "unknown grouping {!r}, expected one of {}".format(
                groups, GROUPINGS
            )
        )
    started = time.perf_counter()
    bundle = _load_bundle(store)
    view = bundle.train.training_view()
    inputs = list(DATA_FILES)
    directory = "gdro-{}".format(groups)
    gcfg = config.resolved_gdro()
    if groups == "oracle":
        ids, n_groups = bundle.train.true_groups, bundle.train.n_groups
    elif groups == "labels":
        ids, n_groups = view.labels, view.n_classes
    elif groups == "slices":
        features = _load_features(store)
        model = _load_slice_model(store)
        ids, n_groups = np.argmax(model.predict(features), axis=1), model.k
        inputs += [FEATURES + ".bin", SLICES + ".bin"]
    else:
        features = _load_features(store)
        model, resp = slices.fit_slices(
            features,
            config.resolved_agro().m,
            replace(config.slices, gamma_slice=0.0),
        )
        model.save(store.path(directory, "clusters"))
        ids, n_groups = np.argmax(resp, axis=1), model.k
        inputs.append(FEATURES + ".bin")
    trace = robust.Trace(n_groups)
    result = robust.gdro_train(
        view, ids, config.net, gcfg, n_groups=n_groups, trace=trace
    )
    _save_checkpoints(store, directory, result.checkpoints)
    trace.save(store.path(directory, "trace.csv"))
    _finish(store, "train-{}".format(directory), inputs, config, started)
    return result


def cmd_train_agro(config, store):
    started = time.perf_counter()
    store.require(
        *DATA_FILES,
        FEATURES + ".bin",
        FEATURES + ".manifest",
        PRETRAINED_GROUPER + ".bin",
        PRETRAINED_GROUPER + ".manifest",
    )
    bundle = synth.DatasetBundle.from_directory(store.path("data"))
    view = bundle.train.training_view()
    result = robust.agro_train(
        view,
        config.net,
        config.agro,
        erm_config=config.erm,
        slice_config=config.slices,
        grouper_config=config.grouper,
        kfold=config.data.n_folds,
        analog=_analog(config, view.input_dim),
        features=erm.FeatureSet.from_file(store.path(FEATURES)),
        pretrained_grouper=grouper_module.Grouper.from_file(
            store.path(PRETRAINED_GROUPER)
        ),
    )
    _save_checkpoints(store, "agro", result.checkpoints)
    result.grouper.save(store.path(FINAL_GROUPER))
    result.trace.save(store.path("agro", "trace.csv"))
    storage.write_json(
        store.path("agro", "adversary.json"),
        [
            {
                "round": r,
                "degenerate_epochs": phase.degenerate_epochs,
                "transitions": [t.tolist() for t in phase.transitions],
            }
            for r, phase in enumerate(result.adversary, start=1)
        ],
    )
    _finish(
        store,
        "train-agro",
        DATA_FILES + [FEATURES + ".bin", PRETRAINED_GROUPER + ".bin"],
        config,
        started,
    )
    return result


def cmd_select(config, store, method, mode=None):
    """Choose a checkpoint of `method` on the dev split."""
    started = time.perf_counter()
    directory = _method_dir(method)
    bundle = _load_bundle(store)
    checkpoints = _load_checkpoints(store, directory)
    mode = mode or DEFAULT_SELECTION.get(directory) or config.selection.mode
    alpha = config.selection.alpha or config.resolved_agro().alpha
    known_group = config.selection.known_group
    grouper = None
    inputs = list(DATA_FILES)
    if mode == "known_group" and known_group is None:
        known_group = _known_groups(bundle.train)
    if mode == "predicted":
        stem = FINAL_GROUPER if directory == "agro" else PRETRAINED_GROUPER
        store.require(stem + ".bin", stem + ".manifest")
        grouper = grouper_module.Grouper.from_file(store.path(stem))
        inputs.append(stem + ".bin")
    best, scores = evaluation.select_checkpoint(
        checkpoints,
        grouper,
        None,
        bundle.dev,
        alpha,
        mode=mode,
        known_group=known_group,
        analog=_analog(config, bundle.dev.inputs.shape[1]),
    )
    selection = {
        "method": directory,
        "mode": mode,
        "alpha": alpha,
        "known_group": known_group,
        "checkpoint": best,
        "scores": scores,
    }
    storage.write_json(
        store.path("selection", "{}.json".format(directory)), selection
    )
    _finish(store, "select-{}".format(directory), inputs, config, started)
    return selection


def cmd_evaluate(config, store, method):
    """Metrics of the selected checkpoint on dev, test and the OOD split."""
    started = time.perf_counter()
    directory = _method_dir(method)
    selection_path = "selection/{}.json".format(directory)
    store.require(selection_path)
    selection = storage.read_json(store.path(selection_path))
    bundle = _load_bundle(store)
    stem = store.path(directory, _checkpoint_name(selection["checkpoint"] + 1))
    theta = NetworkParams.from_file(stem)
    dev = evaluation.evaluate(theta, bundle.dev)
    report = evaluation.evaluate(theta, bundle.test)
    report.ood_accuracy = evaluation.evaluate(
        theta, bundle.ood, true_groups=False
    ).avg_accuracy
    report.selected_checkpoint = selection["checkpoint"]
    report.selection_score = selection["scores"][selection["checkpoint"]]
    metrics = report.to_dict()
    metrics["method"] = directory
    metrics["dev"] = dev.to_dict()
    storage.write_json(
        store.path("metrics", "{}.json".format(directory)), metrics
    )
    logger.info(
        "%s: test avg %.4f worst-group %s ood %.4f",
        directory,
        report.avg_accuracy,
        report.worst_group_accuracy,
        report.ood_accuracy,
    )
    _finish(
        store,
        "evaluate-{}".format(directory),
        DATA_FILES + [selection_path],
        config,
        started,
    )
    return metrics


def summarize_seeds(config, root, method, seeds):
    """Mean and deviation of a method's metrics over consecutive seeds."""
    directory = _method_dir(method)
    reports = []
    for seed in range(config.seed, config.seed + seeds):
        store = storage.RunStore(config.run_id, seed, root)
        path = "metrics/{}.json".format(directory)
        store.require(path)
        reports.append(storage.read_json(store.path(path)))
    summary = {
        "method": directory,
        "seeds": list(range(config.seed, config.seed + seeds)),
        "metrics": evaluation.summarize(reports),
        "dev": evaluation.summarize([r["dev"] for r in reports]),
    }
    base = storage.RunStore(config.run_id, config.seed, root).directory.parent
    storage.write_json(base / "summary-{}.json".format(directory), summary)
    return summary


def run_pipeline(config, store, methods=("erm", "gdro-oracle", "agro")):
    """Every stage for one seed, then selection and evaluation per method."""
    cmd_generate(config, store)
    cmd_train_erm(config, store)
    cmd_extract_features(config, store)
    cmd_fit_slices(config, store)
    cmd_pretrain_grouper(config, store)
    metrics = {}
    for method in methods:
        directory = _method_dir(method)
        if directory.startswith("gdro-"):
            cmd_train_gdro(config, store, directory[len("gdro-"):])
        elif directory == "agro":
            cmd_train_agro(config, store)
        cmd_select(config, store, directory)
        metrics[directory] = cmd_evaluate(config, store, directory)
    return metrics


def cmd_run(config, root=None, seeds=1, methods=("erm", "gdro-oracle",
                                                 "agro")):
    if seeds < 1:
        raise ConfigurationError("seeds must be >= 1")
    for seed in range(config.seed, config.seed + seeds):
        seeded = config.for_seed(seed)
        run_pipeline(seeded, storage.RunStore(config.run_id, seed, root),
                     methods)
    return {
        method: summarize_seeds(config, root, method, seeds)
        for method in methods
    }


def parse_sweep_values(param, text):
    if param not in SWEEP_PARAMS:
        raise ConfigurationError(
            "cannot sweep {!r}, expected one of {}".format(
                param, sorted(SWEEP_PARAMS)
            )
        )
    cast = SWEEP_PARAMS[param][2]
    items = [v.strip() for v in (text or "").split(",") if v.strip()]
    if not items:
        raise ConfigurationError("sweep over {!r} needs values".format(param))
    try:
        return [cast(v) for v in items]
    except ValueError:
        raise ConfigurationError(
            "sweep values {!r} are not {}".format(text, cast.__name__)
        )


def _sweep_config(config, param, value):
    section, name, _ = SWEEP_PARAMS[param]
    run_id = "{}-{}-{}".format(config.run_id, param, value)
    if name == "hidden_sizes":
        value = (value,)
    updated = replace(getattr(config, section), **{name: value})
    return replace(config, run_id=run_id, **{section: updated}).validate()


def _sweep_point(config_dict, root):
    config = ExperimentConfig.from_dict(config_dict)
    store = storage.RunStore(config.run_id, config.seed, root)
    return run_pipeline(config, store, methods=("agro",))["agro"]


def cmd_sweep(config, param, values, root=None, parallel=False):
    """Run the AGRO pipeline once per value of one hyperparameter.

    Returns
    -------
    list of list
        One row per value: value, test average, test worst-group and OOD
        accuracy
    """
    if not values:
        raise ConfigurationError("sweep over {!r} needs values".format(param))
    if param not in SWEEP_PARAMS:
        raise ConfigurationError("cannot sweep {!r}".format(param))
    configs = [_sweep_config(config, param, v).to_dict() for v in values]
    root = storage.runs_root() if root is None else Path(root)
    if parallel:
        with ProcessPoolExecutor() as pool:
            results = list(
                pool.map(_sweep_point, configs, [root] * len(configs))
            )
    else:
        results = [_sweep_point(c, root) for c in configs]
    rows = [
        [value, m["avg_accuracy"], m["worst_group_accuracy"],
         m["ood_accuracy"]]
        for value, m in zip(values, results)
    ]
    storage.write_csv(
        root / config.run_id / "sweep-{}.csv".format(param),
        [param, "avg_accuracy", "worst_group_accuracy", "ood_accuracy"],
        rows,
    )
    return rows


def _handle(args, config, store):
    command = args.command
    if command == "generate":
        cmd_generate(config, store)
    elif command == "train-erm":
        cmd_train_erm(config, store)
    elif command == "extract-features":
        cmd_extract_features(config, store)
    elif command == "fit-slices":
        cmd_fit_slices(config, store)
    elif command == "pretrain-grouper":
        cmd_pretrain_grouper(config, store)
    elif command == "train-gdro":
        cmd_train_gdro(config, store, args.groups)
    elif command == "train-agro":
        cmd_train_agro(config, store)
    elif command == "select":
        cmd_select(config, store, args.method, args.mode)
    elif command == "evaluate":
        if args.seeds > 1:
            for seed in range(config.seed, config.seed + args.seeds):
                cmd_evaluate(
                    config.for_seed(seed),
                    storage.RunStore(config.run_id, seed, store.root),
                    args.method,
                )
            summarize_seeds(config, store.root, args.method, args.seeds)
        else:
            cmd_evaluate(config, store, args.method)
    elif command == "sweep":
        cmd_sweep(
            config,
            args.param,
            parse_sweep_values(args.param, args.values),
            store.root,
            args.parallel,
        )
    elif command == "run":
        cmd_run(config, store.root, args.seeds)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="agro",
        description="Adversarial group discovery experiments on synthetic "
        "data with planted spurious attributes.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")
    parser.add_argument(
        "--runs-root", help="directory holding all runs (or $AGRO_RUNS_ROOT)"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--run-id")
    common.add_argument("--seed", type=int)
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.FIELD=VALUE",
        help="override one config field; repeatable",
    )
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True
    for name in ("generate", "train-erm", "extract-features", "fit-slices",
                 "pretrain-grouper", "train-agro"):
        commands.add_parser(name, parents=[common])
    gdro = commands.add_parser("train-gdro", parents=[common])
    gdro.add_argument("--groups", default="oracle")
    select = commands.add_parser("select", parents=[common])
    select.add_argument("--method", required=True)
    select.add_argument("--mode")
    evaluate = commands.add_parser("evaluate", parents=[common])
    evaluate.add_argument("--method", required=True)
    evaluate.add_argument("--seeds", type=int, default=1)
    sweep = commands.add_parser("sweep", parents=[common])
    sweep.add_argument("--param", required=True)
    sweep.add_argument("--values", default="")
    sweep.add_argument("--parallel", action="store_true")
    run = commands.add_parser("run", parents=[common])
    run.add_argument("--seeds", type=int, default=1)
    return parser


def _configure_logging(verbose, quiet):
    level = logging.INFO
    if verbose:
        level = logging.DEBUG
    elif quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    logging.getLogger("agro").setLevel(level)


def main(argv=None):
    """Entry point of the `agro` command; returns the exit code."""
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    try:
        if args.runs_root:
            storage.register_runs_root(args.runs_root)
        config = load_config(args.config, args.set, args.run_id, args.seed)
        _handle(args, config, storage.RunStore(config.run_id, config.seed))
    except MissingArtifactError as exc:
        logger.error("%s", exc)
        return EXIT_MISSING
    except ConfigurationError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except AgroError as exc:
        logger.error("%s", exc)
        return EXIT_RUNTIME
    return EXIT_OK
