import hashlib
from pathlib import Path

import pytest

import agro
from agro import storage
from agro.errors import MissingArtifactError


@pytest.fixture
def no_registered_root(monkeypatch):
    monkeypatch.setattr(agro.storage, "RUNS_ROOT", None)
    monkeypatch.delenv(storage.RUNS_ROOT_ENV, raising=False)


def test_run_store_layout(tmp_path):
    store = agro.RunStore("demo", 3, tmp_path)

    assert store.directory == tmp_path / "demo" / "seed-3"
    assert store.path("erm", "x.bin") == tmp_path / "demo/seed-3/erm/x.bin"
    assert store.ensure("erm").is_dir()
    assert store.exists("erm")


def test_require_names_every_missing_input(tmp_path):
    store = agro.RunStore("demo", 0, tmp_path)
    store.ensure("data")
    (store.path("data", "train.csv")).write_text("x\n")

    with pytest.raises(MissingArtifactError) as error:
        store.require("data/train.csv", "features/features.bin", "a.bin")

    assert len(error.value.missing) == 2
    assert "features.bin" in str(error.value)
    assert "a.bin" in str(error.value)


def test_stage_manifest_hashes_inputs(tmp_path):
    store = agro.RunStore("demo", 0, tmp_path)
    store.ensure("data")
    store.path("data", "train.csv").write_bytes(b"1,2,3\n")

    store.write_stage_manifest("train-erm", ["data/train.csv"], {"a": 1}, 0.5)
    manifest = storage.read_json(store.path("train-erm.stage.json"))

    assert manifest["stage"] == "train-erm"
    assert manifest["seed"] == 0
    assert manifest["config"] == {"a": 1}
    assert manifest["inputs"]["data/train.csv"] == hashlib.sha256(
        b"1,2,3\n"
    ).hexdigest()
    assert manifest["timing"]["wall_time"] == 0.5


def test_runs_root_default(no_registered_root):
    assert storage.runs_root() == Path("runs")


def test_runs_root_from_environment(no_registered_root, monkeypatch):
    monkeypatch.setenv(storage.RUNS_ROOT_ENV, "/tmp/elsewhere")

    assert storage.runs_root() == Path("/tmp/elsewhere")


def test_register_runs_root_wins(no_registered_root, monkeypatch):
    monkeypatch.setenv(storage.RUNS_ROOT_ENV, "/tmp/elsewhere")
    agro.register_runs_root("/tmp/registered")

    assert storage.runs_root() == Path("/tmp/registered")
    assert agro.RunStore("demo", 1).root == Path("/tmp/registered")
