"""
任务头训练服务测试
"""

import json

import pytest

from conftest import make_image
from core.errors import EmptyDataset
from core.heads.checkpoint import load_head
from core.heads.topic_head import TOPIC_LABELS
from services.trainer import read_dataset, train_from_file

CAPTIONS = {
    "sports": "a player jumps to catch the ball",
    "politics": "a politician giving a speech at a wooden podium",
}


@pytest.fixture
def topic_data(tmp_path):
    images = tmp_path / "images"
    images.mkdir()
    lines = []
    for i in range(10):
        label = "sports" if i % 2 == 0 else "politics"
        make_image(images / f"{i}.png", seed=i)
        lines.append(json.dumps({"image": f"images/{i}.png", "text": CAPTIONS[label], "label": label}))
    lines.append("{broken")
    lines.append(json.dumps({"image": "images/0.png", "text": "x", "label": "cooking"}))
    path = tmp_path / "topics.jsonl"
    path.write_text("\n".join(lines), encoding="utf-8")
    return path


def test_read_dataset_skips_bad_lines(topic_data):
    examples = read_dataset(topic_data, TOPIC_LABELS)
    assert len(examples) == 10
    assert all(example.image.startswith(str(topic_data.parent)) for example in examples)


def test_train_topic_writes_a_loadable_checkpoint(small_config, topic_data, tmp_path):
    small_config.training.topic.epochs = 5
    output = tmp_path / "ckpt" / "topic.ckpt"
    report = train_from_file("topic", topic_data, small_config, output)
    assert sum(report.split_sizes) == 10
    assert len(report.epoch_losses) == 5
    head = load_head(output, expected_kind="topic")
    assert head.l == small_config.fusion.l
    assert head.ff_hidden == small_config.heads.topic_ff_hidden


def test_train_scene_keeps_the_vocabulary(small_config, tmp_path):
    make_image(tmp_path / "a.png", seed=1)
    make_image(tmp_path / "b.png", seed=2)
    vocabulary = tmp_path / "scenes.txt"
    vocabulary.write_text("coast\nforest\n", encoding="utf-8")
    small_config.scene.vocabulary_file = str(vocabulary)
    small_config.training.scene.epochs = 3
    data = tmp_path / "scenes.jsonl"
    data.write_text("\n".join(
        json.dumps({"image": name, "text": text, "label": label})
        for name, text, label in [
            ("a.png", "a child flying a kite on a sunny beach", "coast"),
            ("b.png", "a family walking through a quiet forest", "forest"),
        ] * 3
    ), encoding="utf-8")
    train_from_file("scene", data, small_config, tmp_path / "scene.ckpt")
    assert load_head(tmp_path / "scene.ckpt").labels == ["coast", "forest"]


def test_unusable_data_raises(small_config, tmp_path):
    data = tmp_path / "empty.jsonl"
    data.write_text(json.dumps({"image": "a.png", "text": "t", "label": "nope"}), encoding="utf-8")
    with pytest.raises(EmptyDataset):
        train_from_file("sentiment", data, small_config, tmp_path / "s.ckpt")


def test_unknown_kind_is_rejected(small_config, topic_data, tmp_path):
    with pytest.raises(ValueError):
        train_from_file("emotion", topic_data, small_config, tmp_path / "x.ckpt")
