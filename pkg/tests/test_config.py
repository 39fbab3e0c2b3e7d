from pathlib import Path

import pytest

from app.config import apply_overrides, config_hash, load_experiment_config, parse_override
from app.errors import ConfigError
from app.schemas import ExperimentConfig
from app.utils.seeding import derive_seed


def test_defaults():
    config = load_experiment_config()
    assert config == ExperimentConfig()
    assert config.track.length == pytest.approx(20.0 + 6.0 * 3.141592653589793)
    assert config.learner_spec("state").input_dim == 7
    assert config.learner_spec("left").input_dim == config.rays.ray_count


def test_default_file_matches_defaults():
    assert load_experiment_config(Path(__file__).parents[1] / "configs" / "default.toml") == ExperimentConfig()


def test_overrides():
    config = load_experiment_config(None, ["mc_samples=20", "track.half_width=2.0", "arbiter=blend"])
    assert config.mc_samples == 20
    assert config.track.half_width == 2.0
    assert config.arbiter == "blend"


def test_partial_learner_override_keeps_other_channels():
    config = load_experiment_config(None, ["learners.state.hidden_widths=[16, 16]"])
    assert config.learners["state"].hidden_widths == (16, 16)
    assert config.learners["left"].hidden_widths == (128, 64)


def test_large_preset():
    config = load_experiment_config(None, ['learners.state.hidden_preset="large"'])
    assert config.learner_spec("state").hidden_widths == (1024, 512, 256, 128)


def test_parse_override_values():
    assert parse_override("a.b=3") == (["a", "b"], 3)
    assert parse_override("flag=true") == (["flag"], True)
    assert parse_override("name=blend") == (["name"], "blend")
    with pytest.raises(ConfigError):
        parse_override("no_equals")


def test_override_into_scalar_rejected():
    with pytest.raises(ConfigError):
        apply_overrides({"track": 3}, ["track.half_width=1.0"])


@pytest.mark.parametrize(
    "overrides",
    [
        ["schema_version=2"],
        ["ddp.dt=0.1"],
        ["mc_samples=0"],
        ["track.bogus=1"],
        ["learners.state.dropout_rate=1.0"],
    ],
)
def test_invalid_configs(overrides):
    with pytest.raises(ConfigError):
        load_experiment_config(None, overrides)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment_config(tmp_path / "nope.toml")


def test_malformed_file(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("track = [")
    with pytest.raises(ConfigError):
        load_experiment_config(path)


def test_config_hash_stable_and_sensitive():
    a = ExperimentConfig()
    assert config_hash(a) == config_hash(ExperimentConfig())
    assert config_hash(a) != config_hash(a.model_copy(update={"master_seed": 1}))
    assert len(config_hash(a)) == 40


def test_derived_seeds():
    assert derive_seed(0, "train/state") == derive_seed(0, "train/state")
    assert derive_seed(0, "train/state") != derive_seed(0, "train/left")
    assert derive_seed(0, "train/state") != derive_seed(1, "train/state")
    assert 0 <= derive_seed(7, "mc/left") < 2**63
