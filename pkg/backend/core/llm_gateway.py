"""
LLM Gateway / 大模型网关

Tweet generation with length enforcement, judge-response parsing and
tweet evaluation on top of a ChatPort.
在对话端口之上实现推文生成（长度约束）、评分解析与推文评估。
"""

import asyncio
import hashlib
import re
from dataclasses import replace
from typing import Dict, List, Optional, Pattern, Sequence, Tuple

from loguru import logger

from core.cache_manager import CacheManager, make_key
from core.errors import BackendFailure, EmptyTweet, MalformedResponse
from core.ports.base_port import ChatOptions, ChatPort
from core.prompt_engine import DEFAULT_EVALUATE, PromptTemplate, render_eval_prompt
from models.schemas import ASPECTS, ScoreCard, TweetPost

DEFAULT_RETRIES = 2
SCORE_MIN, SCORE_MAX = 1.0, 10.0

SHORTEN_INSTRUCTION = (
    "Your previous tweet was {length} characters long. Rewrite it in at most "
    "{max_len} characters. Reply with the tweet text only."
)
FORMAT_REMINDER = (
    "Your previous reply could not be read. Reply with exactly six lines, "
    "one per aspect, each in the form `Aspect: <n>/10`, for example:\n{example}"
)

_QUOTES = "\"'“”‘’"


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


def _aspect_pattern(display: str) -> Pattern[str]:
    name = re.escape(display).replace(r"\&", "&").replace("&", "(?:&|and)")
    name = name.replace(r"\ ", r"\s+").replace(" ", r"\s+")
    return re.compile(
        rf"{name}[*_\s]*[:：\-]?[*_\s]*(\d+(?:\.\d+)?)\s*/\s*10",
        re.IGNORECASE,
    )


ASPECT_PATTERNS: Dict[str, Pattern[str]] = {field: _aspect_pattern(display) for field, display in ASPECTS}


class GatedChatPort(ChatPort):
    """
    Chat port wrapper / 对话端口包装器

    Limits in-flight requests to the wrapped port's `max_inflight` and, when a
    cache is given, persists every request/response pair before returning it.
    Wrappers built by `gate_chat_ports` share one semaphore, so the limit holds
    across every worker of a batch.
    """

    def __init__(
        self,
        port: ChatPort,
        cache: Optional[CacheManager] = None,
        max_inflight: Optional[int] = None,
        semaphore: Optional[asyncio.Semaphore] = None
    ):
        self.port = port
        self.cache = cache
        self.name = f"gated:{port.name}"
        self.concurrency_safe = port.concurrency_safe
        self.max_inflight = max(1, min(max_inflight or port.max_inflight, port.max_inflight))
        self._semaphore: Optional[asyncio.Semaphore] = semaphore

    def _gate(self) -> asyncio.Semaphore:
        if self._semaphore is None:
            self._semaphore = asyncio.Semaphore(self.max_inflight)
        return self._semaphore

    async def complete(self, prompt: str, options: ChatOptions) -> str:
        if self.cache is None:
            async with self._gate():
                return await self.port.complete(prompt, options)

        key = make_key(
            "chat",
            port=self.port.name,
            prompt=prompt,
            temperature=options.temperature,
            seed=options.seed,
            model=options.model,
        )

        async def call() -> Dict[str, str]:
            async with self._gate():
                reply = await self.port.complete(prompt, options)
            return {"prompt": prompt, "reply": reply}

        record = await self.cache.get_or_compute(key, call)
        return record["reply"]


def gate_chat_ports(
    ports: Sequence[ChatPort],
    cache: Optional[CacheManager] = None,
    max_inflight: Optional[int] = None
) -> List[GatedChatPort]:
    """
    批处理共用的并发闸门

    Every returned wrapper shares one semaphore sized to the smallest of
    `max_inflight` and the ports' own limits; the same port object always
    gets the same wrapper. Must be called inside the running event loop.
    """
    if not ports:
        return []
    limit = min(port.max_inflight for port in ports)
    if max_inflight:
        limit = min(limit, max_inflight)
    limit = max(1, limit)
    semaphore = asyncio.Semaphore(limit)

    wrappers: Dict[int, GatedChatPort] = {}
    gated: List[GatedChatPort] = []
    for port in ports:
        if id(port) not in wrappers:
            wrappers[id(port)] = GatedChatPort(port, cache, limit, semaphore)
        gated.append(wrappers[id(port)])
    return gated


async def complete_with_retries(
    port: ChatPort,
    prompt: str,
    options: ChatOptions,
    retries: int = DEFAULT_RETRIES
) -> str:
    """
    Call the port up to `retries` times / 带重试的补全

    Raises:
        BackendFailure: every attempt raised; the prompt hash is attached
    """
    last_error: Optional[BaseException] = None
    for attempt in range(1, max(1, retries) + 1):
        try:
            return await port.complete(prompt, options)
        except Exception as e:
            last_error = e
            logger.warning(f"⚠️ 对话端口 {port.name} 第 {attempt}/{retries} 次调用失败: {e}")
    raise BackendFailure(
        f"chat port failed after {retries} attempts",
        prompt_hash=prompt_hash(prompt),
    ) from last_error


def clean_reply(text: str) -> str:
    """去掉首尾空白与包裹的引号"""
    text = text.strip()
    while len(text) >= 2 and text[0] in _QUOTES and text[-1] in _QUOTES:
        text = text[1:-1].strip()
    return text


def truncate_at_word(text: str, max_len: int) -> str:
    """
    Hard truncation / 按词边界截断

    Keeps the longest prefix of at most `max_len` characters that ends at a
    word boundary; a single over-long word is cut at `max_len`.
    """
    if len(text) <= max_len:
        return text
    window = text[:max_len + 1]
    cut = window.rfind(" ")
    if cut <= 0:
        return text[:max_len].rstrip()
    return window[:cut].rstrip()


async def generate_tweet(
    prompt: str,
    port: ChatPort,
    max_len: int = 40,
    options: Optional[ChatOptions] = None,
    retries: int = DEFAULT_RETRIES
) -> str:
    """
    Generate a tweet within max_len characters / 生成推文

    Args:
        prompt: rendered generation prompt
        port: chat port
        max_len: character limit
        options: sampling options; generation defaults to temperature 0.7
        retries: attempts per request before giving up

    Returns:
        str: tweet text, at most max_len characters

    Raises:
        EmptyTweet: empty prompt, or the model replied with nothing
        BackendFailure: the port kept failing
    """
    if not prompt or not prompt.strip():
        raise EmptyTweet("generation prompt is empty")
    options = options or ChatOptions(temperature=0.7)

    text = clean_reply(await complete_with_retries(port, prompt, options, retries))
    if not text:
        raise EmptyTweet(f"chat port returned an empty tweet (prompt_hash={prompt_hash(prompt)})")
    if len(text) <= max_len:
        return text

    logger.debug(f"推文过长 ({len(text)} > {max_len})，请求缩短")
    shorten = f"{prompt}\n\n{SHORTEN_INSTRUCTION.format(length=len(text), max_len=max_len)}"
    try:
        shorter = clean_reply(await complete_with_retries(port, shorten, options, retries))
    except BackendFailure as e:
        logger.warning(f"⚠️ 缩短请求失败，直接截断: {e}")
        shorter = ""
    if shorter and len(shorter) <= max_len:
        return shorter

    truncated = truncate_at_word(shorter or text, max_len)
    logger.debug(f"✂️ 截断为 {len(truncated)} 字符: '{truncated}'")
    return truncated


def parse_scores(judge_text: str) -> ScoreCard:
    """
    Parse a judge reply into a ScoreCard / 解析评分

    Reads `Aspect: <n>/10` lines case-insensitively in any order; decimals are
    accepted and "&" may be spelled "and".

    Raises:
        MalformedResponse: an aspect is missing or a score lies outside [1, 10]
    """
    values: Dict[str, float] = {}
    missing: List[str] = []
    out_of_range: List[Tuple[str, float]] = []
    for field, display in ASPECTS:
        match = ASPECT_PATTERNS[field].search(judge_text or "")
        if not match:
            missing.append(display)
            continue
        value = float(match.group(1))
        if not SCORE_MIN <= value <= SCORE_MAX:
            out_of_range.append((display, value))
        values[field] = value

    if missing:
        raise MalformedResponse("judge reply is incomplete", missing=missing, raw=judge_text)
    if out_of_range:
        details = ", ".join(f"{name}={value:g}" for name, value in out_of_range)
        raise MalformedResponse(f"scores outside [1, 10]: {details}", raw=judge_text)
    return ScoreCard(**values)


async def evaluate_tweet(
    tweet: TweetPost,
    port: ChatPort,
    template: PromptTemplate = DEFAULT_EVALUATE,
    options: Optional[ChatOptions] = None,
    retries: int = DEFAULT_RETRIES
) -> ScoreCard:
    """
    Judge a tweet / 评估推文

    Renders the evaluation prompt, asks the port and parses the reply; a
    malformed reply is re-asked once with a format reminder.

    Raises:
        EmptyTweet: the tweet has no text
        MalformedResponse: the reply is still unreadable after the re-ask
        BackendFailure: the port kept failing
    """
    prompt = render_eval_prompt(tweet.text, tweet.prompt_bundle.caption, template)
    options = options or ChatOptions(temperature=0.0)

    reply = await complete_with_retries(port, prompt, options, retries)
    try:
        return parse_scores(reply)
    except MalformedResponse as e:
        logger.warning(f"⚠️ 评分回复无法解析，重新请求: {e}")

    example = ScoreCard(**{field: 8.0 for field, _ in ASPECTS}).as_lines()
    reminder = f"{prompt}\n\n{FORMAT_REMINDER.format(example=example)}"
    reply = await complete_with_retries(port, reminder, options, retries)
    card = parse_scores(reply)
    logger.debug(f"✓ 评分完成: overall={card.overall}")
    return card


class LLMGateway:
    """
    网关：绑定端口、模板与温度配置

    Used by the pipeline so every call shares the same gate, cache and options.
    """

    def __init__(
        self,
        port: ChatPort,
        evaluate_template: PromptTemplate = DEFAULT_EVALUATE,
        temperature_generate: float = 0.7,
        temperature_evaluate: float = 0.0,
        retries: int = DEFAULT_RETRIES,
        seed: int = 0,
        model: Optional[str] = None,
        cache: Optional[CacheManager] = None,
        max_inflight: Optional[int] = None
    ):
        self.port = port if isinstance(port, GatedChatPort) else GatedChatPort(port, cache, max_inflight)
        self.evaluate_template = evaluate_template
        self.retries = retries
        self.generate_options = ChatOptions(temperature=temperature_generate, seed=seed, model=model)
        self.evaluate_options = replace(self.generate_options, temperature=temperature_evaluate)

    async def generate(self, prompt: str, max_len: int = 40) -> str:
        return await generate_tweet(prompt, self.port, max_len, self.generate_options, self.retries)

    async def evaluate(self, tweet: TweetPost) -> ScoreCard:
        return await evaluate_tweet(tweet, self.port, self.evaluate_template, self.evaluate_options, self.retries)
