"""Chat-completion backends: a production HTTP client and deterministic scripted
implementations for tests and offline runs.

Every backend satisfies the same ``complete`` contract, so the session engine
never needs to know which one it is talking to.
"""

from __future__ import annotations

import logging
import os
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import requests

logger = logging.getLogger(__name__)

DEFAULT_CREDENTIAL_ENV = "CLASSIM_API_KEY"
BACKOFF_INITIAL_S = 1.0
BACKOFF_CAP_S = 30.0


class BackendError(RuntimeError):
    """A completion could not be produced after all retries."""


class FixtureExhausted(BackendError):
    """An ordered scripted backend ran out of queued replies."""


class FixtureMiss(BackendError):
    """A keyed scripted backend has no reply for the requested key."""


@dataclass(frozen=True)
class ChatMessage:
    """One message in a conversation. System messages carry no speaker id."""

    origin: str  # "system" | "agent" | "user"
    speaker_id: str | None
    content: str

    def __post_init__(self) -> None:
        if not self.content:
            raise ValueError("message content must be non-empty")
        if self.origin == "system" and self.speaker_id is not None:
            raise ValueError("system messages have no speaker_id")


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "gpt-4"
    credential_env: str = DEFAULT_CREDENTIAL_ENV
    timeout_s: float = 60.0
    temperature: float = 0.7
    max_retries: int = 2

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class ChatBackend(Protocol):
    """The single contract the engine programs against."""

    def complete(
        self,
        system: str,
        history: Sequence[ChatMessage],
        constraint: str | None = None,
        *,
        temperature: float | None = None,
        speaker_id: str | None = None,
        page: int | None = None,
    ) -> str: ...


class HttpChatBackend:
    """Talks to an HTTP chat-completion endpoint (messages array in, one text
    choice out). Credentials come from the environment at call time and are
    never stored or logged.
    """

    def __init__(self, config: BackendConfig, sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._sleep = sleep

    def complete(
        self,
        system: str,
        history: Sequence[ChatMessage],
        constraint: str | None = None,
        *,
        temperature: float | None = None,
        speaker_id: str | None = None,
        page: int | None = None,
    ) -> str:
        if not system and not history:
            raise ValueError("need a system prompt or a non-empty history")
        messages = _wire_messages(system, history, constraint)
        payload = {
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature if temperature is None else temperature,
        }
        headers = {"Content-Type": "application/json"}
        credential = os.environ.get(self.config.credential_env, "")
        if credential:
            headers["Authorization"] = f"Bearer {credential}"

        attempts = self.config.max_retries + 1
        delay = BACKOFF_INITIAL_S
        last_error: Exception | None = None
        for attempt in range(attempts):
            try:
                return self._attempt(payload, headers)
            except BackendError as exc:
                last_error = exc
                logger.warning(
                    "completion attempt %d/%d failed: %s", attempt + 1, attempts, exc
                )
                if attempt + 1 < attempts:
                    self._sleep(delay)
                    delay = min(delay * 2, BACKOFF_CAP_S)
        raise BackendError(
            f"completion failed after {attempts} attempts: {last_error}"
        ) from last_error

    def _attempt(self, payload: dict, headers: dict) -> str:
        try:
            response = requests.post(
                self.config.endpoint,
                json=payload,
                headers=headers,
                timeout=self.config.timeout_s,
            )
        except requests.RequestException as exc:
            raise BackendError(f"transport failure: {exc.__class__.__name__}") from exc
        if response.status_code != 200:
            raise BackendError(f"endpoint returned status {response.status_code}")
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion response: {exc}") from exc
        if not text:
            raise BackendError("empty completion")
        return text


def _wire_messages(
    system: str, history: Sequence[ChatMessage], constraint: str | None
) -> list[dict]:
    messages: list[dict] = []
    if system:
        messages.append({"role": "system", "content": system})
    for msg in history:
        role = "user" if msg.origin == "user" else "assistant"
        if msg.origin == "system":
            role = "system"
        messages.append({"role": role, "content": msg.content})
    if constraint:
        messages.append({"role": "system", "content": constraint})
    return messages


class OrderedScriptedBackend:
    """Replays a fixed list of replies in order; exhausting it is an error,
    never a silently fabricated reply.
    """

    def __init__(self, replies: Sequence[str]):
        if not replies:
            raise ValueError("fixture must be non-empty")
        self._queue = deque(replies)
        self.calls = 0

    def complete(
        self,
        system: str,
        history: Sequence[ChatMessage],
        constraint: str | None = None,
        *,
        temperature: float | None = None,
        speaker_id: str | None = None,
        page: int | None = None,
    ) -> str:
        self.calls += 1
        if not self._queue:
            raise FixtureExhausted(f"fixture exhausted after {self.calls - 1} replies")
        return self._queue.popleft()

    def remaining(self) -> int:
        return len(self._queue)


class KeyedScriptedBackend:
    """Selects replies by (speaker_id, page). A key may map to one reply or to
    a list consumed first-in first-out; a missing or exhausted key is an
    explicit fixture miss.
    """

    def __init__(self, replies: Mapping[tuple[str, int], str | Sequence[str]]):
        if not replies:
            raise ValueError("fixture must be non-empty")
        self._queues: dict[tuple[str, int], deque[str]] = {}
        for key, value in replies.items():
            items = [value] if isinstance(value, str) else list(value)
            self._queues[key] = deque(items)
        self.calls = 0

    def complete(
        self,
        system: str,
        history: Sequence[ChatMessage],
        constraint: str | None = None,
        *,
        temperature: float | None = None,
        speaker_id: str | None = None,
        page: int | None = None,
    ) -> str:
        self.calls += 1
        key = (speaker_id or "", page if page is not None else -1)
        queue = self._queues.get(key)
        if not queue:
            raise FixtureMiss(f"no scripted reply for speaker={key[0]!r} page={key[1]}")
        return queue.popleft()


def scripted_backend(
    fixture: Sequence[str] | Mapping[tuple[str, int], str | Sequence[str]],
) -> ChatBackend:
    """Build a deterministic backend from an ordered reply list or a keyed map."""
    if isinstance(fixture, Mapping):
        return KeyedScriptedBackend(fixture)
    return OrderedScriptedBackend(fixture)
