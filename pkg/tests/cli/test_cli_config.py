import pytest

from agro import cli
from agro.errors import ConfigurationError, MissingArtifactError

from tests.resources.configs import (
    BROKEN_CONFIG,
    SMALL_CONFIG,
    UNKNOWN_KEY_CONFIG,
    small_config_json,
)


def test_defaults():
    config = cli.load_config()

    assert config.run_id == "default"
    assert config.seed == 0
    assert config.agro.m is None
    assert config.resolved_agro().m == 4
    assert config.resolved_agro().batch_size == 64


def test_small_config_file():
    config = cli.load_config(SMALL_CONFIG)

    assert config.run_id == small_config_json["run_id"]
    assert config.data.n_train == 300
    assert config.data.spurious_attrs[0].correlation == 0.8
    assert config.net.hidden_sizes == (8,)
    assert config.erm.epochs == 2
    assert config.analog_dim == 4


def test_seed_reaches_every_section():
    config = cli.load_config(SMALL_CONFIG, seed=5, run_id="other")

    assert config.run_id == "other"
    assert config.seed == 5
    for section in cli.SEEDED_SECTIONS:
        assert getattr(config, section).seed == 5


def test_overrides():
    config = cli.load_config(
        SMALL_CONFIG,
        ["agro.alpha=0.5", "agro.schedule=interleaved", "analog_dim=2",
         "net.hidden_sizes=[4, 4]"],
    )

    assert config.agro.alpha == 0.5
    assert config.agro.schedule == "interleaved"
    assert config.analog_dim == 2
    assert config.net.hidden_sizes == (4, 4)


def test_config_dict_round_trip():
    config = cli.load_config(SMALL_CONFIG, ["net.hidden_sizes=[4, 4]"])

    assert cli.ExperimentConfig.from_dict(config.to_dict()) == config


@pytest.mark.parametrize(
    "overrides",
    [
        ["agro.alpha"],
        ["agro.alpha=2"],
        ["a.b.c=1"],
        ["erm.momentum=0.9"],
        ["colour=red"],
        ["agro.schedule=sometimes"],
        ["agro.alpha=abc"],
        ["data.n_train=\"10\""],
        ["erm.epochs=2.5"],
        ["agro.normalize_group_loss=1"],
        ["seed=first"],
        ["data.spurious_attrs=[{\"correlation\": \"high\"}]"],
    ],
)
def test_bad_overrides(overrides):
    with pytest.raises(ConfigurationError):
        cli.load_config(SMALL_CONFIG, overrides)


def test_unknown_key_in_file():
    with pytest.raises(ConfigurationError) as error:
        cli.load_config(UNKNOWN_KEY_CONFIG)

    assert "erm.momentum" in str(error.value)


def test_broken_json_names_the_line():
    with pytest.raises(ConfigurationError) as error:
        cli.load_config(BROKEN_CONFIG)

    assert "line" in str(error.value)


def test_missing_config_file(tmp_path):
    with pytest.raises(MissingArtifactError):
        cli.load_config(tmp_path / "absent.json")


def test_sweep_values():
    assert cli.parse_sweep_values("m", "2, 4,8") == [2, 4, 8]
    assert cli.parse_sweep_values("alpha", "0.1,0.2") == [0.1, 0.2]
    with pytest.raises(ConfigurationError):
        cli.parse_sweep_values("m", "")
    with pytest.raises(ConfigurationError):
        cli.parse_sweep_values("m", "two")
    with pytest.raises(ConfigurationError):
        cli.parse_sweep_values("momentum", "0.9")


def test_quoted_number_in_file(tmp_path):
    path = tmp_path / "quoted.json"
    path.write_text('{"data": {"n_train": "10"}}')

    with pytest.raises(ConfigurationError) as error:
        cli.load_config(path)

    assert "data.n_train" in str(error.value)


def test_integral_float_is_accepted_for_integers():
    config = cli.load_config(SMALL_CONFIG, ["erm.epochs=3.0"])

    assert config.erm.epochs == 3
    assert isinstance(config.erm.epochs, int)


def test_sweep_over_grouper_width():
    config = cli.load_config(SMALL_CONFIG)

    swept = cli._sweep_config(config, "grouper_hidden", 16)

    assert cli.parse_sweep_values("grouper_hidden", "16,32") == [16, 32]
    assert swept.grouper.hidden == 16
    assert swept.net == config.net
    assert swept.run_id == "small-grouper_hidden-16"


def test_gdro_section_is_separate_from_agro():
    config = cli.load_config(SMALL_CONFIG, ["gdro.alpha=0.03"])

    assert config.gdro.alpha == 0.03
    assert config.agro.alpha == 0.2
    assert config.resolved_gdro().normalize_group_loss
    assert not config.resolved_agro().normalize_group_loss
    assert config.gdro.seed == config.seed
