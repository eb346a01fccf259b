"""
Sentiment LSTM / 情感分析 LSTM

A from-scratch LSTM cell over the modality-aware prompt W_hat. Columns of
W_hat are timesteps z_1 ... z_n, read left to right.

    f_t = sigmoid(W_f [h_{t-1}, z_t] + b_f)
    i_t = sigmoid(W_i [h_{t-1}, z_t] + b_i)
    o_t = sigmoid(W_o [h_{t-1}, z_t] + b_o)
    c~_t = tanh(W_c [h_{t-1}, z_t] + b_c)
    c_t = f_t * c_{t-1} + i_t * c~_t
    h_t = o_t * tanh(c_t)

The final hidden state goes through a dense layer and softmax over
{positive, negative, neutral}.
"""

from dataclasses import dataclass, fields
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from core.errors import EmptySequence, ShapeError
from core.heads.base_head import DTYPE, BaseHead, Sample, TrainingReport, feature_width, seeded, train_head
from models.schemas import SentimentLabel

SENTIMENT_LABELS: List[str] = [s.value for s in SentimentLabel]
SENTIMENT_DEFAULTS = {"epochs": 500, "batch": 16, "lr": 0.005}
INIT_RANGE = 0.1


@dataclass
class LstmParams:
    """
    门控参数

    Every W_* is hidden x (hidden + input) over the concatenation [h, z].
    """
    W_f: torch.Tensor
    W_i: torch.Tensor
    W_o: torch.Tensor
    W_c: torch.Tensor
    b_f: torch.Tensor
    b_i: torch.Tensor
    b_o: torch.Tensor
    b_c: torch.Tensor

    @property
    def hidden(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    def validate(self) -> None:
        shape = self.W_f.shape
        for name in ("W_i", "W_o", "W_c"):
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {tuple(getattr(self, name).shape)}, W_f has {tuple(shape)}")
        for name in ("b_f", "b_i", "b_o", "b_c"):
            if getattr(self, name).shape != (shape[0],):
                raise ShapeError(f"{name} must have length {shape[0]}")
        if shape[1] <= shape[0]:
            raise ShapeError(f"gate matrices must be hidden x (hidden + input), got {tuple(shape)}")

    @classmethod
    def zeros(cls, hidden: int, input_size: int) -> "LstmParams":
        w = lambda: torch.zeros(hidden, hidden + input_size, dtype=DTYPE)
        b = lambda: torch.zeros(hidden, dtype=DTYPE)
        return cls(W_f=w(), W_i=w(), W_o=w(), W_c=w(), b_f=b(), b_i=b(), b_o=b(), b_c=b())


@dataclass
class LstmState:
    """细胞状态 c 与隐藏状态 h"""
    c: torch.Tensor
    h: torch.Tensor

    @classmethod
    def zeros(cls, hidden: int, batch: Tuple[int, ...] = ()) -> "LstmState":
        return cls(
            c=torch.zeros(*batch, hidden, dtype=DTYPE),
            h=torch.zeros(*batch, hidden, dtype=DTYPE),
        )


@dataclass
class LstmStep:
    """单步的全部中间量，便于测试"""
    f: torch.Tensor
    i: torch.Tensor
    o: torch.Tensor
    c_tilde: torch.Tensor
    state: LstmState


def _tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(DTYPE)
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=DTYPE)


def lstm_step(z, state: LstmState, params: LstmParams) -> LstmStep:
    """
    One LSTM step with intermediates / 单步计算

    z and the state vectors may carry leading batch dimensions.

    Raises:
        ShapeError: z or state do not match the parameter shapes
    """
    params.validate()
    z = _tensor(z)
    if z.shape[-1] != params.input_size:
        raise ShapeError(f"input width {z.shape[-1]} != {params.input_size}")
    if state.h.shape[-1] != params.hidden or state.c.shape[-1] != params.hidden:
        raise ShapeError(f"state width must be {params.hidden}")

    hz = torch.cat([state.h.expand(*z.shape[:-1], -1), z], dim=-1)
    f = torch.sigmoid(hz @ params.W_f.T + params.b_f)
    i = torch.sigmoid(hz @ params.W_i.T + params.b_i)
    o = torch.sigmoid(hz @ params.W_o.T + params.b_o)
    c_tilde = torch.tanh(hz @ params.W_c.T + params.b_c)
    c = f * state.c + i * c_tilde
    h = o * torch.tanh(c)
    return LstmStep(f=f, i=i, o=o, c_tilde=c_tilde, state=LstmState(c=c, h=h))


def lstm_cell(z, state: LstmState, params: LstmParams) -> LstmState:
    """新状态 (c', h')"""
    return lstm_step(z, state, params).state


def lstm_forward(sequence, params: LstmParams, state: Optional[LstmState] = None) -> LstmState:
    """
    Fold lstm_cell over a sequence / 按时间步展开

    Args:
        sequence: list of input vectors, or a tensor of shape (T, input) or (B, T, input)
        params: gate parameters
        state: starting state; zero state when omitted

    Raises:
        EmptySequence: no timesteps
    """
    if not isinstance(sequence, torch.Tensor):
        steps = list(sequence)
        if not steps:
            raise EmptySequence("LSTM input sequence is empty")
        sequence = torch.stack([_tensor(z) for z in steps])
    sequence = sequence.to(DTYPE)
    if sequence.dim() < 2:
        raise ShapeError(f"sequence must be T x input, got shape {tuple(sequence.shape)}")
    if sequence.shape[-2] == 0:
        raise EmptySequence("LSTM input sequence is empty")

    if state is None:
        state = LstmState.zeros(params.hidden, tuple(sequence.shape[:-2]))
    for t in range(sequence.shape[-2]):
        state = lstm_cell(sequence[..., t, :], state, params)
    return state


class SentimentHead(BaseHead):
    """LSTM 情感分类头"""

    kind = "sentiment"

    def __init__(self, l: int, hidden: int = 64, seed: int = 0):
        super().__init__(SENTIMENT_LABELS)
        self.l = l
        self.hidden = hidden
        width = hidden + l
        with seeded(seed):
            for name in ("W_f", "W_i", "W_o", "W_c"):
                setattr(self, name, nn.Parameter(torch.empty(hidden, width, dtype=DTYPE).uniform_(-INIT_RANGE, INIT_RANGE)))
            for name in ("b_f", "b_i", "b_o", "b_c"):
                setattr(self, name, nn.Parameter(torch.empty(hidden, dtype=DTYPE).uniform_(-INIT_RANGE, INIT_RANGE)))
            self.classifier = nn.Linear(hidden, len(SENTIMENT_LABELS))
            nn.init.uniform_(self.classifier.weight, -INIT_RANGE, INIT_RANGE)
            nn.init.uniform_(self.classifier.bias, -INIT_RANGE, INIT_RANGE)
        self.to(DTYPE)

    def params(self) -> LstmParams:
        return LstmParams(**{f.name: getattr(self, f.name) for f in fields(LstmParams)})

    def head_config(self) -> Dict[str, Any]:
        return {"l": self.l, "hidden": self.hidden}

    def forward_batch(self, w_hat: torch.Tensor) -> torch.Tensor:
        if w_hat.shape[-1] != self.l:
            raise ShapeError(f"sentiment head expects l={self.l}, got {w_hat.shape[-1]}")
        final = lstm_forward(w_hat, self.params())
        return self.classifier(final.h)


def sentiment_forward(W_hat, head: SentimentHead) -> np.ndarray:
    """情感概率（positive, negative, neutral）"""
    return head.probabilities(W_hat)


def predict_sentiment(probs) -> SentimentLabel:
    return SentimentLabel(SENTIMENT_LABELS[int(np.argmax(np.asarray(probs)))])


def sentiment_train(
    dataset: Sequence[Tuple[np.ndarray, SentimentLabel]],
    epochs: int = SENTIMENT_DEFAULTS["epochs"],
    batch: int = SENTIMENT_DEFAULTS["batch"],
    lr: float = SENTIMENT_DEFAULTS["lr"],
    head: Optional[SentimentHead] = None,
    seed: int = 0,
    split: Tuple[float, float, float] = (0.8, 0.1, 0.1),
    **head_kwargs
) -> TrainingReport:
    """训练情感头，参数与话题头一致"""
    samples = [
        Sample(features=(w,), label=SENTIMENT_LABELS.index(SentimentLabel(label).value))
        for w, label in dataset
    ]
    if head is None:
        l = feature_width(samples[0].features[0]) if samples else 1
        head = SentimentHead(l=l, seed=seed, **head_kwargs)
    return train_head(head, samples, epochs=epochs, batch=batch, lr=lr, seed=seed, split=split)
