"""
共享测试夹具
"""

from pathlib import Path
from typing import List

import numpy as np
import pytest
from PIL import Image

from core.ports.base_port import ChatOptions, ChatPort
from core.settings import PipelineConfig, load_config

GOLDEN_DIR = Path(__file__).parent / "golden"


def make_image(path: Path, size=(64, 48), seed: int = 0) -> Path:
    """写一张确定性的随机 RGB 图片"""
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    Image.fromarray(pixels, "RGB").save(path, format="PNG")
    return path


class ScriptedChatPort(ChatPort):
    """按顺序返回预设回复；元素为异常时抛出"""

    name = "scripted-chat"
    concurrency_safe = True
    max_inflight = 8

    def __init__(self, replies):
        self.replies = list(replies)
        self.prompts: List[str] = []
        self.options: List[ChatOptions] = []

    async def complete(self, prompt: str, options: ChatOptions) -> str:
        self.prompts.append(prompt)
        self.options.append(options)
        if not self.replies:
            raise RuntimeError("no scripted reply left")
        reply = self.replies.pop(0)
        if isinstance(reply, BaseException):
            raise reply
        return reply


@pytest.fixture
def image_path(tmp_path) -> Path:
    return make_image(tmp_path / "photo.png")


@pytest.fixture
def image_paths(tmp_path) -> List[Path]:
    return [make_image(tmp_path / f"img_{i}.png", seed=i) for i in range(3)]


@pytest.fixture
def small_config(tmp_path) -> PipelineConfig:
    """全 stub、小维度、输出在临时目录中的配置"""
    return load_config(overrides={
        "seed": 0,
        "output_dir": str(tmp_path / "out"),
        "fusion": {"l": 16, "image_dim": 24, "text_dim": 32},
        "heads": {"topic_ff_hidden": 8, "sentiment_hidden": 6, "scene_heads": 2, "scene_ff_hidden": 8},
        "composer": {"cell": 32},
        "cache": {"directory": str(tmp_path / "cache")},
        "batch": {"workers": 2},
    })
