"""
配置加载测试
"""

import pytest

from core.errors import ConfigError
from core.settings import SCENE15_VOCABULARY, PipelineConfig, load_config


def test_repository_config_matches_defaults():
    config = load_config()
    defaults = PipelineConfig()
    assert config.fusion.model_dump() == defaults.fusion.model_dump()
    assert config.training.model_dump() == defaults.training.model_dump()
    assert config.llm.temperature_generate == 0.7
    assert config.llm.temperature_evaluate == 0.0
    assert config.prompt.max_len == 40
    assert config.captioning.k_candidates == 4
    assert config.ports.any_stub()


def test_overrides_merge_and_skip_none():
    config = load_config(overrides={"seed": 5, "fusion": {"l": 32}, "output_dir": None})
    assert config.seed == 5
    assert config.fusion.l == 32
    assert config.fusion.image_dim == 384
    assert config.output_dir == "./data/outputs"


def test_invalid_values_raise_config_error():
    with pytest.raises(ConfigError):
        load_config(overrides={"fusion": {"l": 0}})
    with pytest.raises(ConfigError):
        load_config(overrides={"ports": {"llm": "cloud"}})


def test_missing_or_broken_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.yaml"))
    broken = tmp_path / "broken.yaml"
    broken.write_text("seed: [unclosed", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(broken))


def test_check_paths_reports_missing_files(tmp_path):
    config = load_config(overrides={"checkpoints": {"topic": str(tmp_path / "nope.ckpt")}})
    with pytest.raises(ConfigError, match="checkpoints.topic"):
        config.check_paths()


def test_scene_vocabulary(tmp_path):
    assert load_config().scene_vocabulary() == list(SCENE15_VOCABULARY)
    vocabulary = tmp_path / "v.txt"
    vocabulary.write_text("beach\n\nstreet\n", encoding="utf-8")
    config = load_config(overrides={"scene": {"vocabulary_file": str(vocabulary)}})
    assert config.scene_vocabulary() == ["beach", "street"]
    vocabulary.write_text("only\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        config.scene_vocabulary()


def test_fingerprint_tracks_behaviour_only():
    base = load_config()
    assert base.fingerprint() == load_config(overrides={"logging": {"level": "DEBUG"}}).fingerprint()
    assert base.fingerprint() != load_config(overrides={"seed": 1}).fingerprint()
