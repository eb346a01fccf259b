"""
Topic Head / 话题分类头

Decoder over the modality-aware prompt W_hat (l x n):

    Dense + ReLU -> Add & Norm -> FeedForward -> Add & Norm
    -> adaptive average pooling over tokens -> Dense -> softmax (5 topics)
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from core.errors import ShapeError
from core.heads.base_head import DTYPE, BaseHead, Sample, TrainingReport, feature_width, seeded, train_head
from models.schemas import TopicLabel

TOPIC_LABELS: List[str] = [t.value for t in TopicLabel]
TOPIC_DEFAULTS = {"epochs": 500, "batch": 4, "lr": 0.005}


class TopicHead(BaseHead):
    """话题分类网络"""

    kind = "topic"

    def __init__(self, l: int, ff_hidden: int = 128, pooled_size: int = 1, seed: int = 0):
        super().__init__(TOPIC_LABELS)
        self.l = l
        self.ff_hidden = ff_hidden
        self.pooled_size = pooled_size
        with seeded(seed):
            self.dense1 = nn.Linear(l, l)
            self.norm1 = nn.LayerNorm(l)
            self.ff1 = nn.Linear(l, ff_hidden)
            self.ff2 = nn.Linear(ff_hidden, l)
            self.norm2 = nn.LayerNorm(l)
            self.classifier = nn.Linear(l * pooled_size, len(TOPIC_LABELS))
        self.to(DTYPE)

    def head_config(self) -> Dict[str, Any]:
        return {"l": self.l, "ff_hidden": self.ff_hidden, "pooled_size": self.pooled_size}

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        """Two residual blocks, batch x n x l -> batch x n x l."""
        if x.shape[-1] != self.l:
            raise ShapeError(f"topic head expects l={self.l}, got {x.shape[-1]}")
        h = self.norm1(x + F.relu(self.dense1(x)))
        return self.norm2(h + self.ff2(F.relu(self.ff1(h))))

    def forward_batch(self, w_hat: torch.Tensor) -> torch.Tensor:
        h = self.encode(w_hat)
        pooled = F.adaptive_avg_pool1d(h.transpose(1, 2), self.pooled_size)
        return self.classifier(pooled.flatten(start_dim=1))


def topic_forward(W_hat, head: TopicHead) -> np.ndarray:
    """
    话题概率（长度 5）

    Raises:
        ShapeError: W_hat is not l x n with n >= 1
    """
    return head.probabilities(W_hat)


def predict_topic(probs) -> TopicLabel:
    """argmax；平局取枚举中靠前者"""
    return TopicLabel(TOPIC_LABELS[int(np.argmax(np.asarray(probs)))])


def topic_train(
    dataset: Sequence[Tuple[np.ndarray, TopicLabel]],
    epochs: int = TOPIC_DEFAULTS["epochs"],
    batch: int = TOPIC_DEFAULTS["batch"],
    lr: float = TOPIC_DEFAULTS["lr"],
    head: Optional[TopicHead] = None,
    seed: int = 0,
    split: Tuple[float, float, float] = (0.8, 0.1, 0.1),
    **head_kwargs
) -> TrainingReport:
    """
    训练话题头

    Args:
        dataset: (W_hat, label) pairs
        head: start from this head; otherwise a fresh one sized from the data
    """
    samples = [Sample(features=(w,), label=TOPIC_LABELS.index(TopicLabel(label).value)) for w, label in dataset]
    if head is None:
        l = feature_width(samples[0].features[0]) if samples else 1
        head = TopicHead(l=l, seed=seed, **head_kwargs)
    return train_head(head, samples, epochs=epochs, batch=batch, lr=lr, seed=seed, split=split)
