"""
缓存管理器测试
"""

import asyncio
import json

import pytest

from core.cache_manager import CacheManager, get_cache_manager, make_key
from core.errors import CacheCorruption


@pytest.fixture
def cache(tmp_path):
    return CacheManager(str(tmp_path / "cache"))


def test_keys_are_content_addressed():
    a = make_key("chat", prompt="hi", seed=1)
    assert a == make_key("chat", seed=1, prompt="hi")
    assert a != make_key("chat", prompt="hi", seed=2)
    assert a.startswith("chat-") and len(a) == len("chat-") + 64


async def test_round_trip(cache):
    key = make_key("run", image="a")
    assert await cache.get(key) is None
    assert await cache.put(key, {"tweet": "hello", "scores": [1, 2]})
    assert await cache.get(key) == {"tweet": "hello", "scores": [1, 2]}
    stats = cache.get_stats()
    assert (stats["hits"], stats["misses"], stats["sets"]) == (1, 1, 1)
    assert cache.get_cache_size() == 1


async def test_records_are_write_once(cache):
    key = make_key("run", image="b")
    assert await cache.put(key, {"v": 1})
    assert not await cache.put(key, {"v": 2})
    assert await cache.get(key) == {"v": 1}


async def test_tampered_record_raises(cache):
    key = make_key("chat", prompt="x")
    await cache.put(key, {"reply": "original"})
    path = cache.directory / "chat" / f"{key}.json"
    record = json.loads(path.read_text(encoding="utf-8"))
    record["payload"]["reply"] = "edited"
    path.write_text(json.dumps(record), encoding="utf-8")
    with pytest.raises(CacheCorruption):
        await cache.get(key)
    assert cache.get_stats()["errors"] == 1


async def test_unreadable_record_raises(cache):
    key = make_key("chat", prompt="y")
    await cache.put(key, {"reply": "r"})
    (cache.directory / "chat" / f"{key}.json").write_text("{truncated", encoding="utf-8")
    with pytest.raises(CacheCorruption):
        await cache.get(key)


async def test_get_or_compute_calls_once(cache):
    calls = []

    async def compute():
        calls.append(1)
        return {"value": len(calls)}

    key = make_key("caption", image="c")
    assert await cache.get_or_compute(key, compute) == {"value": 1}
    assert await cache.get_or_compute(key, compute) == {"value": 1}
    assert len(calls) == 1


def test_shared_instance_per_directory(tmp_path):
    a = get_cache_manager(str(tmp_path / "shared"))
    assert get_cache_manager(str(tmp_path / "shared")) is a
    assert get_cache_manager(str(tmp_path / "other")) is not a


async def test_idle_key_locks_are_released(cache):
    calls = []

    async def compute():
        calls.append(1)
        await asyncio.sleep(0.01)
        return {"value": "shared"}

    for i in range(200):
        await cache.put(make_key("chat", prompt=f"p{i}"), {"i": i})
    key = make_key("caption", image="busy")
    results = await asyncio.gather(*(cache.get_or_compute(key, compute) for _ in range(5)))

    assert results == [{"value": "shared"}] * 5
    assert len(calls) == 1
    assert cache._locks == {}
    assert cache.get_stats()["sets"] == 201
