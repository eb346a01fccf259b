"""
Data Models / 数据模型定义

Pydantic models shared by the pipeline, the batch runner and the CLI.
流水线、批处理与命令行共用的 Pydantic 模型。

Includes / 包括:
- TopicLabel / SentimentLabel: closed label sets / 封闭标签集合
- CaptionCandidate, DetectionBox: port results / 端口返回结果
- PromptBundle: T, Y, K, Z plus the caption / 提示词包
- ScoreCard: judged aspect scores / 评分卡
- TweetPost, RunRecord, BatchSummary: pipeline outputs / 流水线输出
"""

import hashlib
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator


class TopicLabel(str, Enum):
    """话题类别（顺序即枚举下标，决定 argmax 的平局规则）"""
    SPORTS = "sports"
    ENTERTAINMENT = "entertainment"
    TECHNOLOGY = "technology"
    POLITICS = "politics"
    BUSINESS = "business"


class SentimentLabel(str, Enum):
    """情感极性"""
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"


# (field name, display name) in judge order / 评分维度
ASPECTS: Tuple[Tuple[str, str], ...] = (
    ("relevance_clarity", "Relevance & Clarity"),
    ("creativity_originality", "Creativity & Originality"),
    ("coherence_structure", "Coherence & Structure"),
    ("emotional_impact", "Emotional Impact"),
    ("engagement", "Engagement"),
    ("overall", "Overall"),
)


class CaptionCandidate(BaseModel):
    """候选描述及其图文相似度"""
    text: str = Field(..., min_length=1)
    similarity: float = Field(..., ge=-1.0, le=1.0)


class DetectionBox(BaseModel):
    """
    Detection Box / 检测框

    Pixel coordinates with x0 < x1 and y0 < y1. Bounds against a concrete image
    are checked by `within(width, height)`.
    """
    x0: float
    y0: float
    x1: float
    y1: float
    confidence: float = Field(..., ge=0.0, le=1.0)
    label: str = "person"

    @model_validator(mode="after")
    def _ordered(self) -> "DetectionBox":
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate box ({self.x0}, {self.y0}, {self.x1}, {self.y1})")
        return self

    def within(self, width: int, height: int) -> bool:
        return self.x0 >= 0 and self.y0 >= 0 and self.x1 <= width and self.y1 <= height

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0


class KeywordScore(BaseModel):
    """关键词重要度 h(w_k)，越小越重要"""
    token_index: int = Field(..., ge=0)
    word: str
    h: float = Field(..., ge=-1.0, le=1.0)


class PromptBundle(BaseModel):
    """
    Prompt Bundle / 提示词包

    topic (T), sentiment (Y), keywords (K), scene (Z) and the selected caption.
    """
    topic: TopicLabel
    sentiment: SentimentLabel
    keywords: List[str] = Field(default_factory=list)
    scene: str
    caption: str


class ScoreCard(BaseModel):
    """
    Score Card / 评分卡

    Each aspect is judged on a 1-10 scale. `overall` is the judge's own
    verdict and is never recomputed from the other aspects.
    """
    relevance_clarity: float = Field(..., ge=1.0, le=10.0)
    creativity_originality: float = Field(..., ge=1.0, le=10.0)
    coherence_structure: float = Field(..., ge=1.0, le=10.0)
    emotional_impact: float = Field(..., ge=1.0, le=10.0)
    engagement: float = Field(..., ge=1.0, le=10.0)
    overall: float = Field(..., ge=1.0, le=10.0)

    def as_lines(self) -> str:
        """Canonical `Aspect: <n>/10` block, one aspect per line."""
        return "\n".join(f"{display}: {getattr(self, field):.2f}/10" for field, display in ASPECTS)


class TweetPost(BaseModel):
    """生成的推文（文本 + 拼图）"""
    text: str
    image: Optional[str] = Field(None, description="拼图输出路径")
    prompt_bundle: PromptBundle
    scorecard: Optional[ScoreCard] = None


class RunRecord(BaseModel):
    """
    Run Record / 单次运行记录

    Every intermediate of one image run. Timings are kept for humans but are
    excluded from `canonical_json()` and therefore from the content hash.
    """
    image_id: str
    image_paths: List[str]
    config_fingerprint: str = ""
    candidates: List[CaptionCandidate] = Field(default_factory=list)
    selected_caption: Optional[str] = None
    keyword_scores: List[KeywordScore] = Field(default_factory=list)
    topic_probs: List[float] = Field(default_factory=list)
    sentiment_probs: List[float] = Field(default_factory=list)
    scene_probs: List[float] = Field(default_factory=list)
    bundle: Optional[PromptBundle] = None
    ablated: List[str] = Field(default_factory=list)
    rendered_prompt: Optional[str] = None
    eval_prompt: Optional[str] = None
    tweet_text: Optional[str] = None
    scorecard: Optional[ScoreCard] = None
    grid_image: Optional[str] = None
    failed_stage: Optional[str] = None
    error: Optional[str] = None
    timings: Dict[str, float] = Field(default_factory=dict)

    def canonical_json(self) -> str:
        return self.model_dump_json(exclude={"timings"})

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


class ManifestRecord(BaseModel):
    """批处理清单中的一行"""
    id: Optional[str] = None
    image: Optional[str] = None
    images: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _merge_images(self) -> "ManifestRecord":
        if self.image and self.image not in self.images:
            self.images = [self.image] + list(self.images)
        if not self.images:
            raise ValueError("manifest record needs 'image' or 'images'")
        if len(self.images) > 9:
            raise ValueError("a record may carry at most 9 images")
        return self


class FailureEntry(BaseModel):
    """批处理失败条目"""
    record_id: str
    stage: str
    error: str


class BatchSummary(BaseModel):
    """
    Batch Summary / 批处理汇总

    `mean_scores` mirrors the judged table rows (display name -> mean).
    """
    count: int = 0
    succeeded: int = 0
    failed: int = 0
    scored: int = 0
    ablated: List[str] = Field(default_factory=list)
    mean_scores: Dict[str, float] = Field(default_factory=dict)
    mean_tweet_length: Optional[float] = None
    max_tweet_length: Optional[int] = None
    failures: List[FailureEntry] = Field(default_factory=list)
    record_hashes: Dict[str, str] = Field(default_factory=dict)
