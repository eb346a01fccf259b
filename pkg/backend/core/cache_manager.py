"""
Cache Manager / 缓存管理器

Content-addressed, write-once record store on the local filesystem.
本地文件系统上的内容寻址、只写一次的记录缓存。

Features / 功能:
- Keys are SHA256 hashes of the request content / 键为请求内容的 SHA256
- Records carry a checksum of their payload / 记录附带负载校验和
- Per-key locks serialize concurrent writers, dropped once idle / 按键加锁串行化写入
- Cache statistics / 缓存统计
"""

import asyncio
import hashlib
import json
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, AsyncIterator, Dict, Optional

import aiofiles
import aiofiles.os
from loguru import logger

from core.errors import CacheCorruption


def canonical_dumps(value: Any) -> str:
    """排序键、紧凑分隔符的 JSON，用于哈希"""
    return json.dumps(value, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def make_key(namespace: str, **parts: Any) -> str:
    """
    Generate a content-addressed key / 生成内容寻址键

    Args:
        namespace: record family, e.g. "chat" or "run"
        **parts: request content; must be JSON-serializable

    Returns:
        str: "<namespace>-<sha256>"
    """
    digest = hashlib.sha256(canonical_dumps(parts).encode("utf-8")).hexdigest()
    return f"{namespace}-{digest}"


class CacheManager:
    """
    File-backed cache / 文件缓存

    Each record lives in `<directory>/<namespace>/<key>.json` as
    `{"key", "checksum", "payload"}`. A key is written at most once.
    """

    def __init__(self, directory: str = "./data/cache"):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._locks: Dict[str, _KeyLock] = {}
        self.stats = {
            "hits": 0,
            "misses": 0,
            "sets": 0,
            "errors": 0
        }
        logger.info(f"✅ 缓存目录: {self.directory}")

    def _path(self, key: str) -> Path:
        namespace = key.split("-", 1)[0] if "-" in key else "misc"
        return self.directory / namespace / f"{key}.json"

    @asynccontextmanager
    async def _locked(self, key: str) -> AsyncIterator[None]:
        """按键加锁；最后一个使用者离开时删除该锁"""
        entry = self._locks.get(key)
        if entry is None:
            entry = self._locks[key] = _KeyLock()
        entry.users += 1
        try:
            async with entry.lock:
                yield
        finally:
            entry.users -= 1
            if entry.users == 0:
                del self._locks[key]

    async def get(self, key: str) -> Optional[Any]:
        """
        Get a cached payload / 获取缓存负载

        Returns:
            The payload, or None when the key is absent

        Raises:
            CacheCorruption: the record is unreadable or fails its checksum
        """
        path = self._path(key)
        if not path.exists():
            self.stats["misses"] += 1
            logger.debug(f"Cache MISS: {key[:24]}...")
            return None

        try:
            async with aiofiles.open(path, "r", encoding="utf-8") as f:
                record = json.loads(await f.read())
            payload = record["payload"]
            valid = record.get("key") == key and record.get("checksum") == _checksum(payload)
        except (OSError, UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
            self.stats["errors"] += 1
            raise CacheCorruption(f"cache record {path} is unreadable: {e}") from e

        if not valid:
            self.stats["errors"] += 1
            logger.error(f"❌ 缓存校验失败: {path}")
            raise CacheCorruption(f"cache record {path} failed its checksum")

        self.stats["hits"] += 1
        logger.debug(f"🎯 Cache HIT: {key[:24]}...")
        return payload

    async def put(self, key: str, payload: Any) -> bool:
        """
        Store a payload once / 写入负载（只写一次）

        Returns:
            bool: True when written, False when the key already existed
        """
        path = self._path(key)
        async with self._locked(key):
            if path.exists():
                return False
            record = {"key": key, "checksum": _checksum(payload), "payload": payload}
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            try:
                async with aiofiles.open(tmp, "w", encoding="utf-8") as f:
                    await f.write(json.dumps(record, sort_keys=True, ensure_ascii=False, indent=2))
                await aiofiles.os.replace(tmp, path)
            except OSError as e:
                self.stats["errors"] += 1
                logger.error(f"❌ 缓存写入失败: {e}")
                raise
            self.stats["sets"] += 1
            logger.debug(f"💾 Cache SET: {key[:24]}...")
            return True

    async def get_or_compute(self, key: str, compute) -> Any:
        """命中则返回缓存，否则调用 compute()（协程函数）并写入"""
        cached = await self.get(key)
        if cached is not None:
            return cached
        async with self._locked(f"compute:{key}"):
            cached = await self.get(key)
            if cached is not None:
                return cached
            value = await compute()
            await self.put(key, value)
            return value

    def get_stats(self) -> Dict[str, Any]:
        """
        Get cache statistics / 获取缓存统计
        """
        total_requests = self.stats["hits"] + self.stats["misses"]
        hit_rate = (self.stats["hits"] / total_requests * 100) if total_requests > 0 else 0

        return {
            "hits": self.stats["hits"],
            "misses": self.stats["misses"],
            "sets": self.stats["sets"],
            "errors": self.stats["errors"],
            "total_requests": total_requests,
            "hit_rate_percent": round(hit_rate, 2),
            "cache_backend": "file",
            "directory": str(self.directory)
        }

    def get_cache_size(self) -> int:
        """缓存记录数"""
        return sum(1 for _ in self.directory.glob("*/*.json"))


@dataclass
class _KeyLock:
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    users: int = 0


def _checksum(payload: Any) -> str:
    return hashlib.sha256(canonical_dumps(payload).encode("utf-8")).hexdigest()


# Per-directory instances / 按目录共享实例
_cache_managers: Dict[str, CacheManager] = {}


def get_cache_manager(directory: str = "./data/cache") -> CacheManager:
    """
    Get the shared cache manager for a directory / 获取目录对应的共享缓存管理器
    """
    resolved = str(Path(directory).resolve())
    if resolved not in _cache_managers:
        _cache_managers[resolved] = CacheManager(directory)
    return _cache_managers[resolved]
