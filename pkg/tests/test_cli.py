"""
命令行测试
"""

import sys

import pytest
import yaml
from click.testing import CliRunner
from loguru import logger

from cli import cli
from conftest import make_image


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump({
        "output_dir": str(tmp_path / "out"),
        "fusion": {"l": 16, "image_dim": 24, "text_dim": 32},
        "heads": {"topic_ff_hidden": 8, "sentiment_hidden": 6, "scene_heads": 2, "scene_ff_hidden": 8},
        "composer": {"cell": 32},
        "cache": {"directory": str(tmp_path / "cache")},
        "logging": {"level": "ERROR", "file": None},
    }), encoding="utf-8")
    return path


@pytest.fixture
def run(config_file):
    runner = CliRunner()

    def invoke(*args):
        return runner.invoke(cli, ["--config", str(config_file), "--backend", "stub", *args])

    yield invoke
    # setup_logging 替换了 loguru 的输出
    logger.remove()
    logger.add(sys.stderr)


def test_keywords_command(run):
    result = run("keywords", "the quick brown fox jumps over the lazy dog", "--count", "2")
    assert result.exit_code == 0, result.output
    assert "fox" in result.output


def test_caption_command(run, image_path):
    result = run("caption", str(image_path), "--k", "3")
    assert result.exit_code == 0, result.output
    assert "🎯" in result.output


def test_prompt_command_prints_the_prompt(run, image_path):
    result = run("prompt", str(image_path), "--ablate", "scene")
    assert result.exit_code == 0, result.output
    assert "Image caption:" in result.output
    assert "Scene: \n" in result.output


def test_generate_command(run, image_path, tmp_path):
    result = run("generate", str(image_path), "--max-len", "30")
    assert result.exit_code == 0, result.output
    assert (tmp_path / "out" / "records" / "photo.json").exists()
    assert (tmp_path / "out" / "grids" / "photo.png").exists()


def test_compose_command(run, image_paths, tmp_path):
    output = tmp_path / "grid.png"
    result = run("compose", *map(str, image_paths), "--cell", "16", "-o", str(output))
    assert result.exit_code == 0, result.output
    assert output.exists()


def test_batch_command(run, image_paths, tmp_path):
    manifest = tmp_path / "batch.jsonl"
    manifest.write_text("\n".join(f'{{"image": "{p}"}}' for p in image_paths), encoding="utf-8")
    result = run("batch", str(manifest), "--workers", "2")
    assert result.exit_code == 0, result.output
    assert (tmp_path / "out" / "summary.json").exists()


def test_train_command(run, tmp_path):
    lines = []
    for i, (text, label) in enumerate([("a happy dog", "positive"), ("an empty street", "negative")] * 3):
        make_image(tmp_path / f"{i}.png", seed=i)
        lines.append(f'{{"image": "{i}.png", "text": "{text}", "label": "{label}"}}')
    data = tmp_path / "sentiment.jsonl"
    data.write_text("\n".join(lines), encoding="utf-8")
    output = tmp_path / "sentiment.ckpt"
    result = run("train", "sentiment", "--data", str(data), "-o", str(output), "--epochs", "2")
    assert result.exit_code == 0, result.output
    assert output.exists()


def test_pipeline_errors_exit_non_zero(run, tmp_path):
    result = CliRunner().invoke(cli, ["--config", str(tmp_path / "missing.yaml"), "keywords", "hello world"])
    assert result.exit_code == 1
    assert "ConfigError" in result.output
