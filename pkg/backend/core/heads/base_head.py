"""
任务头基类与训练循环

Shared pieces for the topic, sentiment and scene heads: tensor conversion,
dataset splitting, a plain-SGD cross-entropy trainer that keeps the
best-validation weights, and accuracy / macro-F1 evaluation.
"""

import copy
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from loguru import logger
from sklearn.metrics import accuracy_score, f1_score
from torch import nn

from core.errors import EmptyDataset, ShapeError, SingleClassDataset
from core.features import as_matrix

DTYPE = torch.float64


def feature_tokens(m) -> torch.Tensor:
    """l x k feature matrix (numpy / FeatureMatrix / tensor) -> k x l float64 tensor."""
    if isinstance(m, torch.Tensor):
        data = m.to(DTYPE)
    else:
        data = torch.as_tensor(as_matrix(m), dtype=DTYPE)
    if data.dim() != 2 or data.shape[1] < 1:
        raise ShapeError(f"expected a non-empty l x k matrix, got shape {tuple(data.shape)}")
    return data.T.contiguous()


def feature_width(m) -> int:
    """l of an l x k feature matrix in any accepted form"""
    return feature_tokens(m).shape[1]


@contextmanager
def seeded(seed: int) -> Iterator[None]:
    """在不影响全局随机状态的前提下固定 torch 随机数"""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield


@dataclass
class Sample:
    """一个训练样本：若干 l x k 特征矩阵 + 类别下标"""
    features: Tuple[np.ndarray, ...]
    label: int


@dataclass
class HeadMetrics:
    accuracy: float
    macro_f1: float
    count: int


@dataclass
class TrainingReport:
    """
    Training Report / 训练报告

    `head` holds the best-validation parameters.
    """
    head: "BaseHead"
    epoch_losses: List[float] = field(default_factory=list)
    val_accuracy: List[float] = field(default_factory=list)
    best_epoch: int = 0
    test: Optional[HeadMetrics] = None
    split_sizes: Tuple[int, int, int] = (0, 0, 0)


class BaseHead(nn.Module):
    """
    任务头基类

    Subclasses implement `forward_batch(*tensors) -> logits (B, C)` where each
    tensor is batch x tokens x l, and `head_config()` for checkpoints.
    """

    kind: str = "base"

    def __init__(self, labels: Sequence[str]):
        super().__init__()
        self.labels = list(labels)

    def forward_batch(self, *features: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def head_config(self) -> Dict[str, Any]:
        raise NotImplementedError

    def forward(self, *features: torch.Tensor) -> torch.Tensor:
        return self.forward_batch(*features)

    def probabilities(self, *matrices) -> np.ndarray:
        """Class probabilities for one sample given l x k feature matrices."""
        tokens = [feature_tokens(m).unsqueeze(0) for m in matrices]
        with torch.no_grad():
            logits = self.forward_batch(*tokens)
        return torch.softmax(logits, dim=-1)[0].cpu().numpy()


def split_dataset(
    samples: Sequence[Any],
    ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0
) -> Tuple[List[Any], List[Any], List[Any]]:
    """随机划分训练/验证/测试集（默认 80:10:10）"""
    order = np.random.default_rng(seed).permutation(len(samples))
    n_train = int(round(ratios[0] * len(samples)))
    n_val = int(round(ratios[1] * len(samples)))
    shuffled = [samples[i] for i in order]
    return shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]


def _collate(batch: Sequence[Sample]) -> Optional[Tuple[torch.Tensor, ...]]:
    """同形状样本堆叠成批；形状不一致时返回 None"""
    arity = len(batch[0].features)
    stacked = []
    for slot in range(arity):
        tokens = [feature_tokens(s.features[slot]) for s in batch]
        if any(t.shape != tokens[0].shape for t in tokens):
            return None
        stacked.append(torch.stack(tokens))
    return tuple(stacked)


def _batch_logits(head: BaseHead, batch: Sequence[Sample]) -> torch.Tensor:
    stacked = _collate(batch)
    if stacked is not None:
        return head.forward_batch(*stacked)
    # 变长序列逐个前向
    return torch.cat([
        head.forward_batch(*(feature_tokens(m).unsqueeze(0) for m in s.features)) for s in batch
    ])


def _labels(batch: Sequence[Sample]) -> torch.Tensor:
    return torch.tensor([s.label for s in batch], dtype=torch.long)


def evaluate_head(head: BaseHead, samples: Sequence[Sample]) -> HeadMetrics:
    """准确率与宏平均 F1"""
    if not samples:
        return HeadMetrics(accuracy=0.0, macro_f1=0.0, count=0)
    with torch.no_grad():
        predicted = _batch_logits(head, samples).argmax(dim=-1).tolist()
    truth = [s.label for s in samples]
    return HeadMetrics(
        accuracy=float(accuracy_score(truth, predicted)),
        macro_f1=float(f1_score(truth, predicted, average="macro", zero_division=0)),
        count=len(samples),
    )


def train_head(
    head: BaseHead,
    samples: Sequence[Sample],
    epochs: int,
    batch: int,
    lr: float,
    seed: int = 0,
    split: Tuple[float, float, float] = (0.8, 0.1, 0.1)
) -> TrainingReport:
    """
    Train a head with plain SGD on cross-entropy / 交叉熵 + SGD 训练

    Args:
        head: model to train in place / 待训练模型
        samples: labelled samples / 带标签样本
        epochs, batch, lr: hyperparameters / 超参数
        seed: controls split and shuffling / 控制划分与打乱
        split: train / validation / test ratios / 划分比例

    Returns:
        TrainingReport with the best-validation weights loaded into `head`

    Raises:
        EmptyDataset: no samples
        SingleClassDataset: fewer than two classes
    """
    if not samples:
        raise EmptyDataset(f"{head.kind} dataset is empty")
    classes = {s.label for s in samples}
    if len(classes) < 2:
        raise SingleClassDataset(f"{head.kind} dataset has a single class: {classes}")
    if max(classes) >= len(head.labels) or min(classes) < 0:
        raise ShapeError(f"label index out of range for {len(head.labels)} classes")

    train_set, val_set, test_set = split_dataset(samples, split, seed)
    if not train_set:
        raise EmptyDataset(f"{head.kind} training split is empty")
    monitor = val_set or train_set

    optimizer = torch.optim.SGD(head.parameters(), lr=lr)
    generator = torch.Generator().manual_seed(seed)
    report = TrainingReport(head=head, split_sizes=(len(train_set), len(val_set), len(test_set)))

    best_key = (-1.0, float("inf"))
    best_state = copy.deepcopy(head.state_dict())

    logger.info(
        f"🔄 开始训练 {head.kind}: {len(train_set)}/{len(val_set)}/{len(test_set)} 样本, "
        f"epochs={epochs}, batch={batch}, lr={lr}"
    )

    for epoch in range(epochs):
        head.train()
        order = torch.randperm(len(train_set), generator=generator).tolist()
        total, seen = 0.0, 0
        for start in range(0, len(order), batch):
            chunk = [train_set[i] for i in order[start:start + batch]]
            optimizer.zero_grad()
            loss = F.cross_entropy(_batch_logits(head, chunk), _labels(chunk))
            loss.backward()
            optimizer.step()
            total += loss.item() * len(chunk)
            seen += len(chunk)
        report.epoch_losses.append(total / seen)

        head.eval()
        with torch.no_grad():
            logits = _batch_logits(head, monitor)
            val_loss = F.cross_entropy(logits, _labels(monitor)).item()
            val_acc = (logits.argmax(dim=-1) == _labels(monitor)).double().mean().item()
        report.val_accuracy.append(val_acc)

        key = (val_acc, -val_loss)
        if key > (best_key[0], -best_key[1]):
            best_key = (val_acc, val_loss)
            best_state = copy.deepcopy(head.state_dict())
            report.best_epoch = epoch

        if (epoch + 1) % max(1, epochs // 10) == 0:
            logger.debug(f"{head.kind} epoch {epoch + 1}/{epochs}: loss={report.epoch_losses[-1]:.4f}, val_acc={val_acc:.3f}")

    head.load_state_dict(best_state)
    head.eval()
    report.test = evaluate_head(head, test_set)
    logger.info(
        f"✅ {head.kind} 训练完成: best_epoch={report.best_epoch + 1}, "
        f"val_acc={best_key[0]:.3f}, test_acc={report.test.accuracy:.3f}, test_f1={report.test.macro_f1:.3f}"
    )
    return report
