"""
Scene Recognition / 场景识别

Decoder:  R  = MHA(Q=W, K=W_hat, V=I)          scene-aware prompt, n tokens
Encoder:  E1 = Norm(W + MHA(Q=W, K=R, V=R))
          E2 = Norm(E1 + FeedForward(E1))
Head:     mean over tokens -> Dense -> softmax over the scene vocabulary

Attention is standard scaled dot-product per head over bias-free Q/K/V
projections, heads concatenated and output-projected. No positional
encodings are added. When the image has m != n patches, the values I are
average-pooled along the patch axis to n tokens so K and V line up.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from core.errors import HeadDivisibility, ShapeError
from core.heads.base_head import DTYPE, BaseHead, Sample, TrainingReport, feature_tokens, feature_width, seeded, train_head
from core.settings import SCENE15_VOCABULARY

SCENE_DEFAULTS = {"epochs": 300, "batch": 16, "lr": 0.008}


@dataclass
class AttentionBundle:
    """
    Q / K / V 角色

    Tensors are token-major: (..., tokens, d).
    """
    Q: torch.Tensor
    K: torch.Tensor
    V: torch.Tensor
    heads: int = 1

    @classmethod
    def of(cls, Q, K, V, heads: int = 1) -> "AttentionBundle":
        """Build from d x tokens feature matrices."""
        return cls(Q=feature_tokens(Q), K=feature_tokens(K), V=feature_tokens(V), heads=heads)

    def validate(self) -> None:
        if self.Q.shape[-1] != self.K.shape[-1]:
            raise ShapeError(f"Q width {self.Q.shape[-1]} != K width {self.K.shape[-1]}")
        if self.K.shape[-2] != self.V.shape[-2]:
            raise ShapeError(f"K has {self.K.shape[-2]} tokens but V has {self.V.shape[-2]}")
        if self.heads < 1 or self.Q.shape[-1] % self.heads != 0:
            raise HeadDivisibility(f"{self.heads} heads do not divide model width {self.Q.shape[-1]}")


class AttentionParams(nn.Module):
    """Bias-free query / key / value / output projections, each d x d."""

    def __init__(self, d: int):
        super().__init__()
        self.d = d
        self.q = nn.Linear(d, d, bias=False)
        self.k = nn.Linear(d, d, bias=False)
        self.v = nn.Linear(d, d, bias=False)
        self.o = nn.Linear(d, d, bias=False)

    @classmethod
    def identity(cls, d: int) -> "AttentionParams":
        params = cls(d).to(DTYPE)
        with torch.no_grad():
            for proj in (params.q, params.k, params.v, params.o):
                proj.weight.copy_(torch.eye(d, dtype=DTYPE))
        return params


def multi_head_attention(
    bundle: AttentionBundle,
    params: AttentionParams,
    return_weights: bool = False
) -> Union[torch.Tensor, Tuple[torch.Tensor, torch.Tensor]]:
    """
    Multi-head scaled dot-product attention / 多头注意力

    Returns:
        (..., n_q, d) output; with return_weights also the (..., heads, n_q, n_k)
        attention weights, whose rows sum to 1

    Raises:
        ShapeError: role shapes inconsistent or width differs from the projections
        HeadDivisibility: heads does not divide d
    """
    bundle.validate()
    d = bundle.Q.shape[-1]
    if d != params.d or bundle.V.shape[-1] != params.d:
        raise ShapeError(f"attention projections are {params.d} wide, inputs are {d}/{bundle.V.shape[-1]}")
    h = bundle.heads
    dh = d // h

    def split(x: torch.Tensor) -> torch.Tensor:
        return x.reshape(*x.shape[:-1], h, dh).transpose(-3, -2)

    q = split(params.q(bundle.Q))
    k = split(params.k(bundle.K))
    v = split(params.v(bundle.V))

    weights = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(dh), dim=-1)
    heads_out = weights @ v
    merged = heads_out.transpose(-3, -2).reshape(*bundle.Q.shape[:-1], d)
    out = params.o(merged)
    if return_weights:
        return out, weights
    return out


def match_tokens(values: torch.Tensor, n: int) -> torch.Tensor:
    """沿 token 轴自适应平均池化到 n 个 token"""
    if values.shape[-2] == n:
        return values
    lead = values.shape[:-2]
    flat = values.reshape(-1, values.shape[-2], values.shape[-1]).transpose(1, 2)
    pooled = F.adaptive_avg_pool1d(flat, n).transpose(1, 2)
    return pooled.reshape(*lead, n, values.shape[-1])


class SceneHead(BaseHead):
    """场景识别网络（一层解码器 + 一层编码器 + 分类头）"""

    kind = "scene"

    def __init__(
        self,
        l: int,
        labels: Optional[Sequence[str]] = None,
        heads: int = 4,
        ff_hidden: int = 128,
        seed: int = 0
    ):
        super().__init__(labels or SCENE15_VOCABULARY)
        if l % heads != 0:
            raise HeadDivisibility(f"{heads} heads do not divide model width {l}")
        self.l = l
        self.heads = heads
        self.ff_hidden = ff_hidden
        with seeded(seed):
            self.decoder = AttentionParams(l)
            self.encoder = AttentionParams(l)
            self.norm1 = nn.LayerNorm(l)
            self.ff1 = nn.Linear(l, ff_hidden)
            self.ff2 = nn.Linear(ff_hidden, l)
            self.norm2 = nn.LayerNorm(l)
            self.classifier = nn.Linear(l, len(self.labels))
        self.to(DTYPE)

    def head_config(self) -> Dict[str, Any]:
        return {"l": self.l, "heads": self.heads, "ff_hidden": self.ff_hidden}

    def decode(self, image: torch.Tensor, text: torch.Tensor, w_hat: torch.Tensor) -> torch.Tensor:
        values = match_tokens(image, w_hat.shape[-2])
        return multi_head_attention(AttentionBundle(Q=text, K=w_hat, V=values, heads=self.heads), self.decoder)

    def encode(self, r: torch.Tensor, text: torch.Tensor) -> torch.Tensor:
        attended = multi_head_attention(AttentionBundle(Q=text, K=r, V=r, heads=self.heads), self.encoder)
        e1 = self.norm1(text + attended)
        return self.norm2(e1 + self.ff2(F.relu(self.ff1(e1))))

    def classify(self, fused: torch.Tensor) -> torch.Tensor:
        if fused.shape[-2] < 1:
            raise ShapeError("scene classifier needs at least one token")
        return self.classifier(fused.mean(dim=-2))

    def forward_batch(self, image: torch.Tensor, text: torch.Tensor, w_hat: torch.Tensor) -> torch.Tensor:
        if text.shape[-2] != w_hat.shape[-2]:
            raise ShapeError(f"W has {text.shape[-2]} tokens but W_hat has {w_hat.shape[-2]}")
        return self.classify(self.encode(self.decode(image, text, w_hat), text))


def _features(tokens: torch.Tensor) -> np.ndarray:
    return tokens.detach().T.cpu().numpy()


def scene_decoder(I, W, W_hat, head: SceneHead) -> np.ndarray:
    """场景感知提示 R（l x n）"""
    with torch.no_grad():
        return _features(head.decode(feature_tokens(I), feature_tokens(W), feature_tokens(W_hat)))


def scene_encoder(R, W, head: SceneHead) -> np.ndarray:
    """编码器输出（l x n）"""
    with torch.no_grad():
        return _features(head.encode(feature_tokens(R), feature_tokens(W)))


def scene_classify(fused, head: SceneHead) -> np.ndarray:
    """场景概率"""
    with torch.no_grad():
        logits = head.classify(feature_tokens(fused))
    return torch.softmax(logits, dim=-1).cpu().numpy()


def scene_forward(I, W, W_hat, head: SceneHead) -> np.ndarray:
    return head.probabilities(I, W, W_hat)


def predict_scene(probs, head: SceneHead) -> str:
    return head.labels[int(np.argmax(np.asarray(probs)))]


def scene_train(
    dataset: Sequence[Tuple[np.ndarray, np.ndarray, np.ndarray, str]],
    epochs: int = SCENE_DEFAULTS["epochs"],
    batch: int = SCENE_DEFAULTS["batch"],
    lr: float = SCENE_DEFAULTS["lr"],
    head: Optional[SceneHead] = None,
    labels: Optional[List[str]] = None,
    seed: int = 0,
    split: Tuple[float, float, float] = (0.8, 0.1, 0.1),
    **head_kwargs
) -> TrainingReport:
    """
    训练场景头

    Args:
        dataset: (I, W, W_hat, scene label) tuples
        labels: scene vocabulary for a fresh head
    """
    vocabulary = list(head.labels) if head is not None else list(labels or SCENE15_VOCABULARY)
    samples = [
        Sample(features=(i, w, w_hat), label=vocabulary.index(label))
        for i, w, w_hat, label in dataset
    ]
    if head is None:
        l = feature_width(samples[0].features[1]) if samples else 4
        head = SceneHead(l=l, labels=vocabulary, seed=seed, **head_kwargs)
    return train_head(head, samples, epochs=epochs, batch=batch, lr=lr, seed=seed, split=split)
