"""
Head checkpoints / 任务头权重文件

Layout:
    8 bytes   little-endian unsigned header length
    header    UTF-8 JSON: format, version, kind, config, labels, tensors, sha256
    blob      every tensor as little-endian float64, concatenated in header order
"""

import hashlib
import json
from pathlib import Path
from typing import Dict, Optional, Type

import numpy as np
import torch
from loguru import logger

from core.errors import CheckpointError
from core.heads.base_head import DTYPE, BaseHead
from core.heads.scene_head import SceneHead
from core.heads.sentiment_lstm import SentimentHead
from core.heads.topic_head import TopicHead

FORMAT = "mpwl-head"
VERSION = 1
HEADER_BYTES = 8

HEAD_TYPES: Dict[str, Type[BaseHead]] = {
    TopicHead.kind: TopicHead,
    SentimentHead.kind: SentimentHead,
    SceneHead.kind: SceneHead,
}


def save_head(head: BaseHead, path) -> Path:
    """写入任务头权重"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    tensors = []
    chunks = []
    offset = 0
    for name, tensor in head.state_dict().items():
        data = tensor.detach().cpu().to(DTYPE).numpy().astype("<f8").ravel()
        tensors.append({"name": name, "shape": list(tensor.shape), "offset": offset, "count": int(data.size)})
        chunks.append(data.tobytes())
        offset += data.size
    blob = b"".join(chunks)

    header = {
        "format": FORMAT,
        "version": VERSION,
        "kind": head.kind,
        "config": head.head_config(),
        "labels": list(head.labels),
        "tensors": tensors,
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    path.write_bytes(len(encoded).to_bytes(HEADER_BYTES, "little") + encoded + blob)
    logger.info(f"💾 已保存 {head.kind} 权重: {path} ({offset} 个参数)")
    return path


def load_head(path, expected_kind: Optional[str] = None) -> BaseHead:
    """
    读取任务头权重

    Raises:
        CheckpointError: unreadable file, wrong format or version, kind mismatch,
            checksum mismatch or inconsistent tensor table
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    if len(raw) < HEADER_BYTES:
        raise CheckpointError(f"{path} is too short to be a checkpoint")
    size = int.from_bytes(raw[:HEADER_BYTES], "little")
    try:
        header = json.loads(raw[HEADER_BYTES:HEADER_BYTES + size].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path} has an unreadable header") from e

    if header.get("format") != FORMAT or header.get("version") != VERSION:
        raise CheckpointError(f"{path} is not a {FORMAT} v{VERSION} checkpoint")
    kind = header.get("kind")
    if kind not in HEAD_TYPES:
        raise CheckpointError(f"{path} holds unknown head kind '{kind}'")
    if expected_kind and kind != expected_kind:
        raise CheckpointError(f"{path} holds a {kind} head, expected {expected_kind}")

    blob = raw[HEADER_BYTES + size:]
    if hashlib.sha256(blob).hexdigest() != header.get("sha256"):
        raise CheckpointError(f"{path} failed its checksum")

    values = np.frombuffer(blob, dtype="<f8")
    config = dict(header.get("config", {}))
    if kind == SceneHead.kind:
        config["labels"] = header.get("labels")
    try:
        head = HEAD_TYPES[kind](**config)
        state = {}
        for entry in header["tensors"]:
            start, count = entry["offset"], entry["count"]
            if start + count > values.size:
                raise CheckpointError(f"{path}: tensor {entry['name']} runs past the blob")
            chunk = values[start:start + count].astype(np.float64)
            state[entry["name"]] = torch.as_tensor(chunk.reshape(entry["shape"]), dtype=DTYPE)
        head.load_state_dict(state)
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError, RuntimeError) as e:
        raise CheckpointError(f"{path} does not match a {kind} head: {e}") from e

    head.eval()
    logger.info(f"✓ 已加载 {kind} 权重: {path}")
    return head
