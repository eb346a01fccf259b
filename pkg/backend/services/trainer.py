"""
Head Trainer / 任务头训练服务

Builds training sets from JSONL files (`{"image", "text", "label"}` per
line) through the configured ports, trains one head and writes its
checkpoint.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

from loguru import logger

from core.errors import BackendFailure, EmptyDataset, ManifestUnreadable
from core.heads.base_head import TrainingReport
from core.heads.checkpoint import save_head
from core.heads.scene_head import SceneHead, scene_train
from core.heads.sentiment_lstm import SENTIMENT_LABELS, SentimentHead, sentiment_train
from core.heads.topic_head import TOPIC_LABELS, TopicHead, topic_train
from core.pipeline import encode_pair, make_projector
from core.ports.registry import PortSet, build_port_set
from core.settings import PipelineConfig

HEAD_KINDS = ("topic", "sentiment", "scene")


@dataclass
class LabelledExample:
    image: str
    text: str
    label: str


def _labels_for(kind: str, config: PipelineConfig) -> List[str]:
    if kind == "topic":
        return TOPIC_LABELS
    if kind == "sentiment":
        return SENTIMENT_LABELS
    return config.scene_vocabulary()


def read_dataset(path, labels: Sequence[str]) -> List[LabelledExample]:
    """
    读取训练数据；无效行与未知标签会被跳过并记录警告

    Raises:
        ManifestUnreadable: the file cannot be read
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ManifestUnreadable(f"cannot read training data {path}: {e}") from e

    base = path.parent
    examples = []
    for number, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            item = json.loads(raw)
            example = LabelledExample(image=str(item["image"]), text=str(item["text"]), label=str(item["label"]))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            logger.warning(f"⚠️ 第 {number} 行无效，已跳过: {e}")
            continue
        if example.label not in labels:
            logger.warning(f"⚠️ 第 {number} 行标签 '{example.label}' 未知，已跳过")
            continue
        if not Path(example.image).is_absolute():
            example.image = str(base / example.image)
        examples.append(example)
    return examples


def train_from_file(
    kind: str,
    data_path,
    config: PipelineConfig,
    output_path,
    ports: Optional[PortSet] = None
) -> TrainingReport:
    """
    Train one head from a JSONL file / 从 JSONL 文件训练任务头

    Args:
        kind: "topic", "sentiment" or "scene"
        data_path: training data
        config: pipeline config (fusion widths, head widths, hyperparameters)
        output_path: checkpoint destination

    Raises:
        EmptyDataset: no usable examples
        SingleClassDataset: fewer than two classes
    """
    if kind not in HEAD_KINDS:
        raise ValueError(f"unknown head kind '{kind}', choose from {HEAD_KINDS}")

    labels = _labels_for(kind, config)
    examples = read_dataset(data_path, labels)
    ports = ports or build_port_set(config)
    projector = make_projector(config)

    encoded = []
    for example in examples:
        try:
            encoded.append((encode_pair(example.image, example.text, ports, projector), example.label))
        except (BackendFailure, ValueError) as e:
            logger.warning(f"⚠️ 样本 {example.image} 编码失败，已跳过: {e}")
    if not encoded:
        raise EmptyDataset(f"{kind} training data {data_path} has no usable examples")
    logger.info(f"✓ 已编码 {len(encoded)} 个 {kind} 样本")

    hyper = getattr(config.training, kind)
    common = dict(epochs=hyper.epochs, batch=hyper.batch, lr=hyper.lr, seed=config.seed, split=config.training.split)
    l = config.fusion.l

    if kind == "topic":
        head = TopicHead(l, config.heads.topic_ff_hidden, config.heads.topic_pooled_size, seed=config.seed)
        report = topic_train([(p.fusion.W_hat, label) for p, label in encoded], head=head, **common)
    elif kind == "sentiment":
        head = SentimentHead(l, config.heads.sentiment_hidden, seed=config.seed)
        report = sentiment_train([(p.fusion.W_hat, label) for p, label in encoded], head=head, **common)
    else:
        head = SceneHead(l, labels, config.heads.scene_heads, config.heads.scene_ff_hidden, seed=config.seed)
        report = scene_train([(p.I, p.W, p.fusion.W_hat, label) for p, label in encoded], head=head, **common)

    save_head(report.head, output_path)
    return report
