"""Minimal chat-completions client, configured from the environment.

Variables: ``FAIRRETRIEVAL_LLM_ENDPOINT`` (base URL of an
OpenAI-compatible API), ``FAIRRETRIEVAL_LLM_API_KEY`` and
``FAIRRETRIEVAL_LLM_MODEL``.
"""
from __future__ import annotations

import os
import threading
import time
from typing import Protocol

import httpx


class LLMClient(Protocol):
    model: str

    def complete(self, prompt: str, *, temperature: float = 0.0) -> str: ...


class LLMConfigError(RuntimeError):
    pass


class ChatCompletionsClient:
    def __init__(self, endpoint: str, api_key: str, model: str, timeout: float = 120.0,
                 http: httpx.Client | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self._headers = {"Authorization": f"Bearer {api_key}"}
        self._http = http or httpx.Client(timeout=timeout)

    @classmethod
    def from_env(cls) -> "ChatCompletionsClient":
        try:
            return cls(
                os.environ["FAIRRETRIEVAL_LLM_ENDPOINT"],
                os.environ["FAIRRETRIEVAL_LLM_API_KEY"],
                os.environ["FAIRRETRIEVAL_LLM_MODEL"],
            )
        except KeyError as exc:
            raise LLMConfigError(f"missing environment variable {exc.args[0]}") from None

    def complete(self, prompt: str, *, temperature: float = 0.0) -> str:
        resp = self._http.post(
            f"{self.endpoint}/chat/completions",
            headers=self._headers,
            json={
                "model": self.model,
                "temperature": temperature,
                "messages": [{"role": "user", "content": prompt}],
            },
        )
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"] or ""


class RateLimitedClient:
    """Serializes calls to a wrapped client and enforces a minimum spacing."""

    def __init__(self, inner: LLMClient, max_per_second: float = 2.0):
        self.inner = inner
        self.model = getattr(inner, "model", "llm")
        self._interval = 1.0 / max_per_second if max_per_second > 0 else 0.0
        self._lock = threading.Lock()
        self._last = 0.0

    def complete(self, prompt: str, *, temperature: float = 0.0) -> str:
        with self._lock:
            wait = self._last + self._interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            try:
                return self.inner.complete(prompt, temperature=temperature)
            finally:
                self._last = time.monotonic()
