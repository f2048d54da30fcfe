import csv
import hashlib
import json
import logging
import os
import time
from pathlib import Path

import numpy as np

import agro
from agro.errors import ConfigurationError, MissingArtifactError

logger = logging.getLogger(__name__)

RUNS_ROOT = None
RUNS_ROOT_ENV = "AGRO_RUNS_ROOT"
FORMAT_VERSION = 1
FLOAT_DTYPE = "<f8"


def register_runs_root(path):
    """Set the directory every run directory is created under.

    Takes precedence over the AGRO_RUNS_ROOT environment variable.

    >>> import agro
    >>> agro.storage.register_runs_root("/tmp/agro-runs")

    Parameters
    ----------
    path: str or pathlib.Path
        Root directory, created on first use
    """
    agro.storage.RUNS_ROOT = None if path is None else Path(path)


def runs_root():
    if RUNS_ROOT is not None:
        return Path(RUNS_ROOT)
    return Path(os.environ.get(RUNS_ROOT_ENV, "runs"))


def _format_value(value):
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_manifest(path, entries):
    """Write a text manifest of `key=value` lines.

    The format version is always the first line, the remaining keys follow
    in insertion order.
    """
    lines = ["format_version={}".format(FORMAT_VERSION)]
    for key, value in entries.items():
        if "=" in str(key) or "\n" in _format_value(value):
            raise ConfigurationError(
                "manifest entry {!r} cannot be written".format(key)
            )
        lines.append("{}={}".format(key, _format_value(value)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path):
    entries = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        entries[key] = value
    return entries


def write_array(path, array):
    np.ascontiguousarray(array, dtype=FLOAT_DTYPE).tofile(str(path))


def read_array(path, shape=None):
    array = np.fromfile(str(path), dtype=FLOAT_DTYPE).astype(np.float64)
    if shape is not None:
        array = array.reshape(shape)
    return array


def _stem_paths(stem):
    stem = Path(stem)
    return (
        stem.with_name(stem.name + ".bin"),
        stem.with_name(stem.name + ".manifest"),
    )


def save_checkpoint(stem, vector, entries):
    """Write a flat float64 vector to '<stem>.bin' and its manifest.

    Parameters
    ----------
    stem: str or pathlib.Path
        Path without suffix
    vector: numpy.ndarray
        Values, written little-endian
    entries: dict
        Manifest entries
    """
    binary, manifest = _stem_paths(stem)
    binary.parent.mkdir(parents=True, exist_ok=True)
    write_array(binary, vector)
    write_manifest(manifest, entries)


def load_checkpoint(stem):
    binary, manifest = _stem_paths(stem)
    missing = [p for p in (binary, manifest) if not p.exists()]
    if missing:
        raise MissingArtifactError(missing)
    return read_array(binary), read_manifest(manifest)


def checkpoint_exists(stem):
    return all(p.exists() for p in _stem_paths(stem))


def checkpoint_files(stem):
    return list(_stem_paths(stem))


def content_hash(path):
    """SHA-256 hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(str(path), "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path, obj):
    """Write JSON with sorted keys so equal objects give equal bytes."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def read_json(path):
    with open(str(path)) as json_data:
        return json.load(json_data)


def write_csv(path, header, rows):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(str(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_value(v) for v in row])


def read_csv(path):
    with open(str(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


class RunStore(object):
    """Directory holding every artifact of one seeded run.

    Parameters
    ----------
    run_id: str
        Name of the experiment
    seed: int
        Seed of this run; runs live in <root>/<run_id>/seed-<seed>
    root: str or pathlib.Path
        Defaults to runs_root()
    """

    __slots__ = ["run_id", "seed", "root", "directory"]

    def __init__(self, run_id, seed, root=None):
        self.run_id = run_id
        self.seed = int(seed)
        self.root = Path(root) if root is not None else runs_root()
        self.directory = self.root / run_id / "seed-{}".format(self.seed)

    def path(self, *parts):
        return self.directory.joinpath(*parts)

    def ensure(self, *parts):
        directory = self.path(*parts)
        directory.mkdir(parents=True, exist_ok=True)
        return directory

    def exists(self, *parts):
        return self.path(*parts).exists()

    def require(self, *relpaths):
        """Raise MissingArtifactError naming every absent input.

        Parameters
        ----------
        *relpaths: str
            Paths relative to the run directory
        """
        missing = [str(self.path(p)) for p in relpaths if not self.exists(p)]
        if missing:
            raise MissingArtifactError(missing)

    def write_stage_manifest(self, stage, inputs, config, wall_time):
        """Record provenance of a finished stage.

        Parameters
        ----------
        stage: str
            Stage name, the manifest is '<stage>.stage.json'
        inputs: list of str
            Input paths relative to the run directory
        config: dict
            Resolved configuration
        wall_time: float
            Seconds taken, kept apart from the reproducible fields
        """
        manifest = {
            "stage": stage,
            "run_id": self.run_id,
            "seed": self.seed,
            "inputs": {p: content_hash(self.path(p)) for p in sorted(inputs)},
            "config": config,
            "timing": {"wall_time": wall_time, "finished_at": time.time()},
        }
        write_json(self.path("{}.stage.json".format(stage)), manifest)
