"""
Settings / 配置加载

Loads config.yaml into validated pydantic models, merges CLI overrides and
reads secrets from the environment.
加载 config.yaml 为经过校验的 pydantic 模型，合并命令行覆盖项，并从环境变量读取密钥。

Precedence / 优先级: config file < CLI flags; env vars < flags except secrets,
which only ever come from the environment (LLM_API_KEY).
"""

import hashlib
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from loguru import logger
from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from core.errors import ConfigError

Backend = Literal["stub", "live"]

DEFAULT_CONFIG_PATH = Path(__file__).parent.parent.parent / "config.yaml"

# Scene-15 类别名
SCENE15_VOCABULARY: Tuple[str, ...] = (
    "bedroom", "suburb", "industrial", "kitchen", "living room",
    "coast", "forest", "highway", "inside city", "mountain",
    "open country", "street", "tall building", "office", "store",
)


class PortsConfig(BaseModel):
    """端口选择：stub（离线确定性）或 live（真实模型）"""
    captioner: Backend = "stub"
    similarity: Backend = "stub"
    encoder: Backend = "stub"
    image_encoder: Backend = "stub"
    tagger: Backend = "stub"
    detector: Backend = "stub"
    llm: Backend = "stub"

    def any_stub(self) -> bool:
        return "stub" in self.model_dump().values()


class LiveModelsConfig(BaseModel):
    """live 适配器使用的 HuggingFace 模型"""
    captioner: str = "nlpconnect/vit-gpt2-image-captioning"
    captioner_top_k: int = 50
    captioner_temperature: float = 1.0
    similarity: str = "openai/clip-vit-base-patch32"
    encoder: str = "bert-base-uncased"
    image_encoder: str = "google/vit-base-patch16-384"
    tagger: str = "vblagoje/bert-english-uncased-finetuned-pos"
    detector: str = "IDEA-Research/grounding-dino-tiny"
    box_threshold: float = 0.35
    text_threshold: float = 0.25
    device: str = "cpu"


class CaptioningConfig(BaseModel):
    k_candidates: int = Field(4, ge=1)


class KeywordsConfig(BaseModel):
    count: int = Field(3, ge=1)


class FusionConfig(BaseModel):
    l: int = Field(256, ge=1)
    image_dim: int = Field(384, ge=1)
    text_dim: int = Field(768, ge=1)
    projection_seed: int = 7


class HeadsConfig(BaseModel):
    """各任务头的宽度（图中未给出，均为可配置默认值）"""
    topic_ff_hidden: int = Field(128, ge=1)
    topic_pooled_size: int = Field(1, ge=1)
    sentiment_hidden: int = Field(64, ge=1)
    scene_heads: int = Field(4, ge=1)
    scene_ff_hidden: int = Field(128, ge=1)


class TrainHyper(BaseModel):
    epochs: int = Field(..., ge=1)
    batch: int = Field(..., ge=1)
    lr: float = Field(..., gt=0)


class TrainingConfig(BaseModel):
    topic: TrainHyper = TrainHyper(epochs=500, batch=4, lr=0.005)
    sentiment: TrainHyper = TrainHyper(epochs=500, batch=16, lr=0.005)
    scene: TrainHyper = TrainHyper(epochs=300, batch=16, lr=0.008)
    split: Tuple[float, float, float] = (0.8, 0.1, 0.1)


class PromptConfig(BaseModel):
    max_len: int = Field(40, ge=1)
    ablate: List[Literal["topic", "sentiment", "scene", "keywords"]] = Field(default_factory=list)


class TemplatesConfig(BaseModel):
    generate: Optional[str] = None
    evaluate: Optional[str] = None


class CheckpointsConfig(BaseModel):
    """None 表示使用按种子初始化（未训练）的任务头"""
    topic: Optional[str] = None
    sentiment: Optional[str] = None
    scene: Optional[str] = None


class SceneConfig(BaseModel):
    vocabulary_file: Optional[str] = None


class LLMConfig(BaseModel):
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-4"
    max_inflight: int = Field(4, ge=1)
    temperature_generate: float = 0.7
    temperature_evaluate: float = 0.0
    retries: int = Field(2, ge=1)
    timeout: float = 60.0
    evaluate: bool = True


class ComposerConfig(BaseModel):
    cell: int = Field(512, ge=1)
    background: Tuple[int, int, int] = (255, 255, 255)
    strategy: Literal["top", "union"] = "top"
    query: str = "person"
    stub_boxes: List[Dict[str, Any]] = Field(default_factory=list)


class CacheConfig(BaseModel):
    directory: str = "./data/cache"


class BatchConfig(BaseModel):
    workers: int = Field(4, ge=1)


class LoggingConfig(BaseModel):
    level: str = "INFO"
    file: Optional[str] = "logs/mpwl.log"
    max_size: int = 10485760  # 10MB
    backup_count: int = 5


class PipelineConfig(BaseModel):
    """
    Pipeline Config / 流水线配置

    Mirrors config.yaml one-to-one.
    """
    seed: int = 0
    output_dir: str = "./data/outputs"
    ports: PortsConfig = PortsConfig()
    live_models: LiveModelsConfig = LiveModelsConfig()
    captioning: CaptioningConfig = CaptioningConfig()
    keywords: KeywordsConfig = KeywordsConfig()
    fusion: FusionConfig = FusionConfig()
    heads: HeadsConfig = HeadsConfig()
    training: TrainingConfig = TrainingConfig()
    prompt: PromptConfig = PromptConfig()
    templates: TemplatesConfig = TemplatesConfig()
    checkpoints: CheckpointsConfig = CheckpointsConfig()
    scene: SceneConfig = SceneConfig()
    llm: LLMConfig = LLMConfig()
    composer: ComposerConfig = ComposerConfig()
    cache: CacheConfig = CacheConfig()
    batch: BatchConfig = BatchConfig()
    logging: LoggingConfig = LoggingConfig()

    def check_paths(self) -> None:
        """确认所有引用的文件在运行开始时存在"""
        referenced = {
            "templates.generate": self.templates.generate,
            "templates.evaluate": self.templates.evaluate,
            "checkpoints.topic": self.checkpoints.topic,
            "checkpoints.sentiment": self.checkpoints.sentiment,
            "checkpoints.scene": self.checkpoints.scene,
            "scene.vocabulary_file": self.scene.vocabulary_file,
        }
        for key, path in referenced.items():
            if path and not Path(path).exists():
                raise ConfigError(f"{key} points to a missing file: {path}")

    def scene_vocabulary(self) -> List[str]:
        """场景词表：UTF-8 文本，每行一个标签"""
        if not self.scene.vocabulary_file:
            return list(SCENE15_VOCABULARY)
        lines = Path(self.scene.vocabulary_file).read_text(encoding="utf-8").splitlines()
        vocabulary = [line.strip() for line in lines if line.strip()]
        if len(vocabulary) < 2:
            raise ConfigError("scene vocabulary needs at least two labels")
        return vocabulary

    def fingerprint(self) -> str:
        """Hash of everything that influences outputs (logging and cache location excluded)."""
        payload = self.model_dump(mode="json", exclude={"logging", "cache", "batch", "output_dir"})
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


class Secrets(BaseSettings):
    """只从环境变量（或 .env）读取的密钥"""
    model_config = SettingsConfigDict(env_file=".env", extra="ignore")

    llm_api_key: Optional[str] = None


def _deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        elif value is not None:
            merged[key] = value
    return merged


def load_config(
    path: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None
) -> PipelineConfig:
    """
    Load and validate configuration / 加载并校验配置

    Args:
        path: YAML file; falls back to the repository's config.yaml / YAML 配置文件
        overrides: nested dict from CLI flags (None values ignored) / 命令行覆盖项

    Returns:
        PipelineConfig

    Raises:
        ConfigError: unreadable file or invalid values / 文件不可读或取值无效
    """
    config_path = Path(path) if path else DEFAULT_CONFIG_PATH
    data: Dict[str, Any] = {}

    if config_path.exists():
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {config_path}: {e}") from e
    elif path:
        raise ConfigError(f"config file not found: {config_path}")

    if overrides:
        data = _deep_merge(data, overrides)

    try:
        return PipelineConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def setup_logging(cfg: LoggingConfig) -> None:
    """配置 loguru：stderr + 滚动日志文件"""
    logger.remove()
    logger.add(sys.stderr, level=cfg.level)
    if cfg.file:
        Path(cfg.file).parent.mkdir(parents=True, exist_ok=True)
        logger.add(
            cfg.file,
            level=cfg.level,
            rotation=cfg.max_size,
            retention=cfg.backup_count,
            encoding="utf-8",
        )
