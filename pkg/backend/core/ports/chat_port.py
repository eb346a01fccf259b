"""
HTTP 对话端口
支持任意 OpenAI 兼容的 chat-completions 接口
"""

import httpx
from loguru import logger

from core.errors import BackendFailure, ConfigError
from core.ports.base_port import ChatOptions, ChatPort


class HttpChatPort(ChatPort):
    """Chat-completions HTTP 端口"""

    name = "http-chat"
    concurrency_safe = True

    def __init__(
        self,
        api_key: str,
        endpoint: str = "https://api.openai.com/v1",
        model: str = "gpt-4",
        max_inflight: int = 4,
        timeout: float = 60.0
    ):
        if not api_key:
            raise ConfigError("LLM_API_KEY 环境变量未设置")

        self.api_key = api_key
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.max_inflight = max_inflight
        self.timeout = timeout

    async def complete(self, prompt: str, options: ChatOptions) -> str:
        """调用 chat-completions 接口"""
        try:
            async with httpx.AsyncClient(timeout=self.timeout) as client:
                response = await client.post(
                    f"{self.endpoint}/chat/completions",
                    headers={
                        "Authorization": f"Bearer {self.api_key}",
                        "Content-Type": "application/json"
                    },
                    json={
                        "model": options.model or self.model,
                        "messages": [
                            {
                                "role": "user",
                                "content": prompt
                            }
                        ],
                        "temperature": options.temperature,
                        "seed": options.seed
                    }
                )

                response.raise_for_status()
                result = response.json()

                # 提取响应
                content = result["choices"][0]["message"]["content"] or ""

                logger.info(f"LLM 调用成功: model={options.model or self.model}, 回复长度: {len(content)}")
                return content

        except (httpx.HTTPError, KeyError, IndexError, ValueError) as e:
            logger.error(f"LLM 调用失败: {str(e)}")
            raise BackendFailure("chat completion failed", endpoint=self.endpoint) from e
