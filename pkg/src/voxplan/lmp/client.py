"""HTTP client for a chat-completions-compatible program generator."""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass

import requests

from ..errors import EndpointError

ENV_BASE_URL = "VOXPLAN_LLM_BASE_URL"
ENV_MODEL = "VOXPLAN_LLM_MODEL"
ENV_API_KEY = "VOXPLAN_LLM_API_KEY"


@dataclass
class EndpointConfig:
    base_url: str
    model: str
    api_key: str = ""
    timeout_s: float = 60.0
    max_attempts: int = 3
    retry_sleep_s: float = 0.1

    @staticmethod
    def from_env() -> "EndpointConfig":
        base = os.environ.get(ENV_BASE_URL, "")
        if not base:
            raise EndpointError(f"{ENV_BASE_URL} is not set")
        return EndpointConfig(
            base_url=base,
            model=os.environ.get(ENV_MODEL, "default"),
            api_key=os.environ.get(ENV_API_KEY, ""),
        )


class ChatCompletionsClient:
    def __init__(self, config: EndpointConfig, session: requests.Session | None = None):
        self.config = config
        self.session = session or requests.Session()
        self.calls = 0

    def complete(self, messages: list[dict]) -> str:
        """POST one chat request; retries transport failures with backoff."""
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        payload = {
            "model": self.config.model,
            "messages": messages,
            "temperature": 0,
        }
        last_error: Exception | None = None
        for attempt in range(self.config.max_attempts):
            self.calls += 1
            try:
                resp = self.session.post(
                    url, json=payload, headers=headers, timeout=self.config.timeout_s
                )
                resp.raise_for_status()
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                if attempt + 1 < self.config.max_attempts:
                    time.sleep(self.config.retry_sleep_s * (attempt + 1))
        raise EndpointError(f"endpoint failed after {self.config.max_attempts} attempts: {last_error}")


_FENCE = re.compile(r"```[a-zA-Z]*\n(.*?)```", re.DOTALL)


def extract_code_block(text: str) -> str:
    """Pull the first fenced code block, or the whole text when unfenced."""
    m = _FENCE.search(text)
    return (m.group(1) if m else text).strip() + "\n"
