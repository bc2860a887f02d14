"""Language-model provider contract: a live HTTP chat client and a
deterministic scripted provider for replayable tests."""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

ROLES = ("system", "user", "assistant")

DEFAULT_TEMPERATURE = 0.4
DEFAULT_MAX_TOKENS = 500


class LLMError(RuntimeError):
    pass


class ScriptError(LLMError):
    """Scripted provider had no entry for a request (test failure signal)."""


class LLMProviderError(LLMError):
    """Live provider failed after the configured retries."""


@dataclass
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise ValueError(f"{self.role} message must have content")


@dataclass
class CompletionRequest:
    messages: list[ChatMessage]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    @classmethod
    def user(
        cls,
        text: str,
        temperature: float = DEFAULT_TEMPERATURE,
        max_tokens: int = DEFAULT_MAX_TOKENS,
    ) -> "CompletionRequest":
        """Single flat user message; prompts are never split across roles."""
        return cls([ChatMessage("user", text)], temperature, max_tokens)

    def text(self) -> str:
        return "\n".join(message.content for message in self.messages)


def request_to_json(request: CompletionRequest) -> str:
    return json.dumps(
        {
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        },
        sort_keys=True,
    )


def request_from_json(payload: str) -> CompletionRequest:
    data = json.loads(payload)
    return CompletionRequest(
        [ChatMessage(m["role"], m["content"]) for m in data["messages"]],
        data["temperature"],
        data["max_tokens"],
    )


class LLMProvider(Protocol):
    def complete(self, request: CompletionRequest) -> str: ...


@dataclass(frozen=True)
class ScriptEntry:
    kind: str  # "substring" | "exact"
    match: str
    response: str

    def __post_init__(self) -> None:
        if self.kind not in ("substring", "exact"):
            raise ValueError(f"unknown match kind {self.kind!r}")

    def matches(self, text: str) -> bool:
        if self.kind == "exact":
            return text == self.match
        return self.match in text


class ScriptedProvider:
    """Deterministic canned responses for golden-trace tests.

    sequential=True replays entries strictly in order, asserting each
    request matches the next entry. sequential=False answers with the first
    matching entry and never consumes anything.
    """

    def __init__(self, entries: Iterable[ScriptEntry], sequential: bool = True) -> None:
        self.entries = list(entries)
        self.sequential = sequential
        self._cursor = 0
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> str:
        text = request.text()
        if not self.sequential:
            for entry in self.entries:
                if entry.matches(text):
                    return entry.response
            raise ScriptError(f"no script entry matches request:\n{text[:400]}")
        with self._lock:
            if self._cursor >= len(self.entries):
                raise ScriptError("script exhausted")
            entry = self.entries[self._cursor]
            if not entry.matches(text):
                raise ScriptError(
                    f"script entry {self._cursor} ({entry.kind} {entry.match!r}) "
                    f"does not match request:\n{text[:400]}"
                )
            self._cursor += 1
            return entry.response

    @property
    def remaining(self) -> int:
        with self._lock:
            return len(self.entries) - self._cursor if self.sequential else len(self.entries)


def load_script(source: str | Path) -> list[ScriptEntry]:
    """Read a script file: one JSON object per line with kind/match/response."""
    entries: list[ScriptEntry] = []
    with open(source, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                entries.append(
                    ScriptEntry(
                        record.get("kind", "substring"), record["match"], record["response"]
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ScriptError(f"{source}: bad script entry on line {number}: {exc}") from exc
    return entries


def save_script(entries: Iterable[ScriptEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for entry in entries:
            handle.write(
                json.dumps(
                    {"kind": entry.kind, "match": entry.match, "response": entry.response},
                    sort_keys=True,
                )
                + "\n"
            )


@dataclass
class HttpChatConfig:
    endpoint: str
    model: str
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 1.0


class HttpChatProvider:
    """OpenAI-style /chat/completions client with retry on transient errors."""

    def __init__(self, config: HttpChatConfig, session=None) -> None:
        import requests

        self.config = config
        self._session = session or requests.Session()

    def complete(self, request: CompletionRequest) -> str:
        import os

        import requests

        config = self.config
        key = os.environ.get(config.api_key_env, "")
        payload = {
            "model": config.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(config.retries):
            try:
                response = self._session.post(
                    f"{config.endpoint.rstrip('/')}/chat/completions",
                    json=payload,
                    headers={"Authorization": f"Bearer {key}"} if key else {},
                    timeout=config.timeout,
                )
                if response.status_code in (408, 429) or response.status_code >= 500:
                    raise requests.HTTPError(f"retryable status {response.status_code}")
                if response.status_code >= 400:  # auth/validation: do not retry
                    raise LLMProviderError(
                        f"completion rejected with status {response.status_code}: "
                        f"{response.text[:200]}"
                    )
                return response.json()["choices"][0]["message"]["content"]
            except requests.RequestException as exc:
                last_error = exc
                if attempt + 1 < config.retries:
                    time.sleep(config.backoff * (2**attempt))
        raise LLMProviderError(
            f"completion failed after {config.retries} attempts: {last_error}"
        ) from last_error
