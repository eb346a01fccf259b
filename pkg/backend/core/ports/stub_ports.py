"""
Stub Ports / 离线确定性端口

Deterministic stand-ins for every model backend so the numeric core and the
whole pipeline run offline. Same inputs (and seed) always give the same output.
所有模型后端的确定性替身：相同输入（与种子）总是得到相同输出。
"""

import hashlib
import random
import re
from typing import Dict, Iterable, List, Optional

import numpy as np
from loguru import logger
from PIL import Image

from core.ports.base_port import (
    CaptionerPort,
    ChatOptions,
    ChatPort,
    DetectorPort,
    ImageEncoderPort,
    ImageRef,
    SimilarityPort,
    TaggerPort,
    TextEncoderPort,
    image_identity,
    load_image,
    stable_unit,
)
from models.schemas import ASPECTS, DetectionBox, ScoreCard


def _seed_from(*parts: str) -> int:
    digest = hashlib.sha256("\x00".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class StubCaptioner(CaptionerPort):
    """从固定描述库中按 (图片, 种子) 抽取 k 条"""

    name = "stub-captioner"
    concurrency_safe = True

    CAPTIONS = (
        "a man riding a wave on top of a surfboard",
        "a group of young people playing soccer on a green field",
        "a woman holding a red umbrella on a busy street",
        "a crowd watching a live concert at night",
        "a politician giving a speech at a wooden podium",
        "a person typing on a laptop in a bright office",
        "two friends eating pizza in a small kitchen",
        "a tall building next to an empty highway",
        "a child flying a kite on a sunny beach",
        "a chef cooking dinner in a modern restaurant",
        "a player jumps to catch the ball",
        "a family walking through a quiet forest",
    )

    def generate(self, image: ImageRef, k: int, seed: int) -> List[str]:
        rng = random.Random(_seed_from(image_identity(image), str(seed)))
        return [rng.choice(self.CAPTIONS) for _ in range(k)]


class StubSimilarity(SimilarityPort):
    """哈希 (图片 ID, 文本) 得到 [-1, 1] 内的可复现分数"""

    name = "stub-similarity"
    concurrency_safe = True

    def score(self, image: ImageRef, text: str) -> float:
        return 2.0 * stable_unit(image_identity(image), text) - 1.0


class RandomProjectionEncoder(TextEncoderPort):
    """
    Random-Projection Encoder / 随机投影编码器

    Every lower-cased word maps to a seeded Gaussian vector; a sentence vector
    is the sum over its whitespace-separated words, i.e. a fixed random
    projection of the bag of words.
    """

    name = "stub-encoder"
    concurrency_safe = True

    def __init__(self, dim: int = 768, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._vectors: Dict[str, np.ndarray] = {}

    def word_vector(self, word: str) -> np.ndarray:
        key = word.lower()
        vec = self._vectors.get(key)
        if vec is None:
            rng = np.random.default_rng(_seed_from(str(self.seed), key))
            vec = rng.standard_normal(self.dim)
            self._vectors[key] = vec
        return vec

    def encode(self, sentence: str) -> np.ndarray:
        out = np.zeros(self.dim)
        for word in sentence.split():
            out = out + self.word_vector(word)
        return out

    def encode_tokens(self, tokens: List[str]) -> np.ndarray:
        return np.stack([self.word_vector(t) for t in tokens], axis=1)


class ConstantEncoder(TextEncoderPort):
    """对任何输入都返回同一向量"""

    name = "constant-encoder"
    concurrency_safe = True

    def __init__(self, vector: Iterable[float]):
        self.vector = np.asarray(list(vector), dtype=np.float64)
        self.dim = self.vector.shape[0]

    def encode(self, sentence: str) -> np.ndarray:
        return self.vector.copy()

    def encode_tokens(self, tokens: List[str]) -> np.ndarray:
        return np.repeat(self.vector[:, None], len(tokens), axis=1)


class StubImageEncoder(ImageEncoderPort):
    """
    把图片缩放为 grid x grid 个 8x8 图块，像素展平后做固定随机投影
    """

    name = "stub-image-encoder"
    concurrency_safe = True
    PATCH = 8

    def __init__(self, dim: int = 384, grid: int = 4, seed: int = 0):
        self.dim = dim
        self.grid = grid
        rng = np.random.default_rng(_seed_from("image-encoder", str(seed)))
        self.projection = rng.standard_normal((dim, self.PATCH * self.PATCH * 3))

    def encode_patches(self, image: ImageRef) -> np.ndarray:
        img = load_image(image)
        side = self.grid * self.PATCH
        pixels = np.asarray(img.resize((side, side), Image.Resampling.BILINEAR), dtype=np.float64) / 255.0
        patches = (
            pixels.reshape(self.grid, self.PATCH, self.grid, self.PATCH, 3)
            .transpose(0, 2, 1, 3, 4)
            .reshape(self.grid * self.grid, -1)
        )
        # 居中后投影，加一个常数偏置避免纯色图块得到零向量
        centered = patches - 0.5
        return self.projection @ centered.T + 1e-3


class LexiconTagger(TaggerPort):
    """
    Lexicon Tagger / 词典词性标注器

    Closed-class words from a lexicon, open-class words from a small lexicon
    plus suffix rules; everything else is a noun. Tags are Universal POS.
    """

    name = "lexicon-tagger"
    concurrency_safe = True

    CLOSED = {
        "DET": "a an the this that these those some every each any no another",
        "ADP": (
            "of in on at by with from to into onto over under near behind beside "
            "through across for about above below between along around during "
            "without up down off out inside next"
        ),
        "CCONJ": "and or but nor so yet",
        "PRON": "i you he she it we they me him her us them his its their our my your",
        "AUX": "is are was were be been being am has have had do does did can could will would should may might must",
        "ADV": "very quite really just also too not there here then now almost",
        "NUM": "one two three four five six seven eight nine ten",
    }
    ADJECTIVES = set((
        "quick big small large young old red blue green white black yellow brown "
        "happy sad beautiful busy empty tall short bright dark sunny snowy wooden "
        "new little live modern quiet lazy"
    ).split())
    VERBS = set((
        "run runs sit sits stand stands hold holds play plays ride rides walk walks "
        "eat eats look looks fly flies jump jumps catch catches watch watches give gives "
        "cook cooks type types"
    ).split())
    ADJ_SUFFIXES = ("ful", "ous", "ive", "able", "less", "ish")

    def __init__(self):
        self.closed: Dict[str, str] = {}
        for tag, words in self.CLOSED.items():
            for word in words.split():
                self.closed[word] = tag

    def tag(self, tokens: List[str]) -> List[str]:
        tags: List[str] = []
        for position, token in enumerate(tokens):
            word = token.lower()
            prev = tags[-1] if tags else None
            if word in self.closed:
                tag = self.closed[word]
            elif word.isdigit():
                tag = "NUM"
            elif word in self.ADJECTIVES or word.endswith(self.ADJ_SUFFIXES):
                tag = "ADJ"
            elif word in self.VERBS:
                tag = "VERB"
            elif len(word) > 4 and (word.endswith("ing") or word.endswith("ed")):
                tag = "VERB"
            elif position > 0 and token[:1].isupper():
                tag = "PROPN"
            elif word.endswith("s") and not word.endswith("ss") and prev in ("NOUN", "PROPN", "PRON"):
                tag = "VERB"
            else:
                tag = "NOUN"
            tags.append(tag)
        return tags


class StubDetector(DetectorPort):
    """返回配置好的检测框（裁剪到图像范围内、按置信度降序）"""

    name = "stub-detector"
    concurrency_safe = True

    def __init__(self, boxes: Optional[List[DetectionBox]] = None):
        self.boxes = list(boxes or [])

    def detect(self, image: Image.Image, query: str) -> List[DetectionBox]:
        width, height = image.size
        found = [b for b in self.boxes if b.label == query and b.within(width, height)]
        if len(found) < len(self.boxes):
            logger.debug(f"stub 检测器丢弃了 {len(self.boxes) - len(found)} 个越界或标签不符的框")
        return sorted(found, key=lambda b: b.confidence, reverse=True)


class StubChatPort(ChatPort):
    """
    Stub Chat Port / 离线对话端口

    A pure function of (prompt, seed). Judge prompts (those asking for
    `<n>/10` lines) get a canonical score block; anything else gets a short
    tweet built around the first keyword found in the prompt.
    """

    name = "stub-chat"
    concurrency_safe = True
    max_inflight = 64

    OPENERS = ("Loving", "Caught", "Pure", "Chasing", "Nothing beats")
    CLOSERS = ("today!", "vibes", "moment", "all day", "with friends tonight and every night after")
    KEYWORDS_LINE = re.compile(r"^[ \t]*Keywords:[ \t]*(.*)$", re.MULTILINE)

    async def complete(self, prompt: str, options: ChatOptions) -> str:
        seed = str(options.seed)
        if "/10" in prompt:
            values = {
                field: round(1.0 + round(stable_unit(prompt, seed, field) * 180) * 0.05, 2)
                for field, _ in ASPECTS
            }
            return ScoreCard(**values).as_lines()

        match = self.KEYWORDS_LINE.search(prompt)
        keyword = match.group(1).split(",")[0].strip() if match and match.group(1).strip() else "this"
        rng = random.Random(_seed_from(prompt, seed))
        return f"{rng.choice(self.OPENERS)} {keyword} {rng.choice(self.CLOSERS)}"
