"""
Prompt Engine / 提示词模板引擎

Renders the generation prompt from a PromptBundle and the judge prompt from a
tweet and its image caption. Templates are plain UTF-8 text with `{name}`
placeholders, substituted in a single pass; each placeholder appears exactly
once.
"""

import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

from loguru import logger

from core.errors import EmptyTweet, MissingPlaceholder, UnknownPlaceholder
from models.schemas import ASPECTS, PromptBundle

GENERATE_FIELDS: FrozenSet[str] = frozenset({"topic", "sentiment", "keywords", "scene", "caption", "max_len"})
EVALUATE_FIELDS: FrozenSet[str] = frozenset({"tweet", "caption"})
ABLATABLE: Tuple[str, ...] = ("topic", "sentiment", "scene", "keywords")

DEFAULT_MAX_LEN = 40

_PLACEHOLDER = re.compile(r"\{([^{}\n]*)\}")

DEFAULT_GENERATE_TEXT = """You are a social media writer. Write one tweet for the image described below.

Image caption: {caption}
Topic: {topic}
Sentiment: {sentiment}
Keywords: {keywords}
Scene: {scene}

Requirements:
1. Stay on the given topic and convey the given sentiment
2. Use the keywords naturally
3. Fit the scene shown in the image
4. Keep the tweet at most {max_len} characters long, hashtags and emoji included

Reply with the tweet text only, without quotes or explanations.
"""

DEFAULT_EVALUATE_TEXT = """You are an experienced social media editor judging a tweet written for an image.

Image caption: {caption}
Tweet: {tweet}

Score the tweet on each aspect below on a scale from 1 to 10; decimals are allowed.
Reply with exactly these six lines, replacing <n> with your score, and nothing else:

Relevance & Clarity: <n>/10
Creativity & Originality: <n>/10
Coherence & Structure: <n>/10
Emotional Impact: <n>/10
Engagement: <n>/10
Overall: <n>/10
"""


@dataclass(frozen=True)
class PromptTemplate:
    """
    Prompt Template / 提示词模板

    Attributes:
        text: template body with `{name}` placeholders
        version: stable identifier recorded with every rendered prompt
        kind: "generate" or "evaluate"
    """
    text: str
    version: str
    kind: str = "generate"

    @property
    def required(self) -> FrozenSet[str]:
        return GENERATE_FIELDS if self.kind == "generate" else EVALUATE_FIELDS

    def placeholders(self) -> List[str]:
        return _PLACEHOLDER.findall(self.text)

    def validate(self) -> None:
        """
        Raises:
            MissingPlaceholder: a required field never appears
            UnknownPlaceholder: unknown names, repeated names or stray braces
        """
        names = self.placeholders()
        missing = sorted(self.required - set(names))
        if missing:
            raise MissingPlaceholder(missing)

        unknown = sorted({n for n in names if n not in self.required})
        repeated = sorted({n for n in names if names.count(n) > 1 and n in self.required})
        if unknown or repeated:
            raise UnknownPlaceholder(unknown + [f"{n} (repeated)" for n in repeated])

        stripped = _PLACEHOLDER.sub("", self.text)
        if "{" in stripped or "}" in stripped:
            raise UnknownPlaceholder(["stray brace"])

    @classmethod
    def from_file(cls, path, kind: str) -> "PromptTemplate":
        """读取模板文件，版本号取文件名与内容哈希"""
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
        template = cls(text=text, version=f"file:{path.stem}@{digest}", kind=kind)
        template.validate()
        if kind == "evaluate":
            _check_aspects(template)
        logger.info(f"✓ 已加载 {kind} 模板: {template.version}")
        return template


DEFAULT_GENERATE = PromptTemplate(text=DEFAULT_GENERATE_TEXT, version="default-generate-v1", kind="generate")
DEFAULT_EVALUATE = PromptTemplate(text=DEFAULT_EVALUATE_TEXT, version="default-evaluate-v1", kind="evaluate")


def _check_aspects(template: PromptTemplate) -> None:
    for _, display in ASPECTS:
        count = template.text.count(display)
        if count != 1:
            logger.warning(f"⚠️ 评分模板 {template.version} 中 '{display}' 出现 {count} 次，评分解析可能失败")


def load_templates(
    generate_path: Optional[str] = None,
    evaluate_path: Optional[str] = None
) -> Tuple[PromptTemplate, PromptTemplate]:
    """配置中的模板路径；未配置时使用内置模板"""
    generate = PromptTemplate.from_file(generate_path, "generate") if generate_path else DEFAULT_GENERATE
    evaluate = PromptTemplate.from_file(evaluate_path, "evaluate") if evaluate_path else DEFAULT_EVALUATE
    return generate, evaluate


def _substitute(template: PromptTemplate, values: Dict[str, str]) -> str:
    template.validate()
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template.text)


def render_prompt(
    bundle: PromptBundle,
    template: PromptTemplate = DEFAULT_GENERATE,
    max_len: int = DEFAULT_MAX_LEN,
    ablate: Iterable[str] = ()
) -> str:
    """
    Render the generation prompt / 渲染生成提示词

    Args:
        bundle: topic, sentiment, keywords, scene and caption
        template: generation template
        max_len: character limit written into the prompt
        ablate: subtasks rendered as blanks ("topic", "sentiment", "scene", "keywords")

    Raises:
        MissingPlaceholder / UnknownPlaceholder: invalid template
    """
    disabled = set(ablate)
    unknown = disabled - set(ABLATABLE)
    if unknown:
        raise ValueError(f"cannot ablate {sorted(unknown)}; choose from {list(ABLATABLE)}")

    values = {
        "topic": bundle.topic.value,
        "sentiment": bundle.sentiment.value,
        "keywords": ", ".join(bundle.keywords),
        "scene": bundle.scene,
        "caption": bundle.caption,
        "max_len": str(max_len),
    }
    for name in disabled:
        values[name] = ""
    return _substitute(template, values)


def render_eval_prompt(
    tweet_text: str,
    image_caption: str,
    template: PromptTemplate = DEFAULT_EVALUATE
) -> str:
    """
    渲染评分提示词

    Raises:
        EmptyTweet: tweet text is empty or blank
    """
    if not tweet_text or not tweet_text.strip():
        raise EmptyTweet("cannot evaluate an empty tweet")
    return _substitute(template, {"tweet": tweet_text, "caption": image_caption})
