"""Chat-completion clients: a remote HTTP backend and a scripted test double.

All LLM traffic in the package flows through `LlmClient.complete`; no other
module constructs network calls for completions. The remote client follows
the common chat-completions wire convention so any compatible provider
works.
"""

from __future__ import annotations

import json
import logging
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.4
DEFAULT_MAX_TOKENS = 1000


class LlmError(Exception):
    """Base class for completion failures."""


class LlmAuthError(LlmError):
    """Authentication or authorization rejected by the backend."""


class LlmTransportError(LlmError):
    """Transport-level failure that persisted through all retries."""


class ScriptError(LlmError):
    """A scripted client received a request no script entry matches."""


@dataclass
class ChatRequest:
    user_text: str
    system_text: str | None = None
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    model: str = ""

    def __post_init__(self):
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature out of range [0, 2]: {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1: {self.max_tokens}")


@dataclass
class ChatResponse:
    text: str
    usage: dict | None = None
    backend: str = ""


class LlmClient:
    def complete(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError


@dataclass
class ScriptEntry:
    """One canned response; `match` substrings must all appear in the user text.

    An empty `match` tuple matches any request. Entries flagged `once` are
    consumed on first use, which lets a script answer the same prompt
    differently across successive calls.
    """

    response: str
    match: tuple[str, ...] = ()
    once: bool = False
    used: bool = field(default=False, compare=False)

    def matches(self, request: ChatRequest) -> bool:
        if self.once and self.used:
            return False
        return all(needle in request.user_text for needle in self.match)


class ScriptedLlm(LlmClient):
    """Deterministic client replaying canned responses; never fabricates.

    Entries are scanned in order and the first match wins. A request with no
    matching entry raises ScriptError. All requests are recorded on
    `.requests` for assertions.
    """

    def __init__(self, entries: list[ScriptEntry]):
        self.entries = list(entries)
        self.requests: list[ChatRequest] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedLlm":
        """Load entries from a JSON list of {match, response, once} objects.

        `match` may be a single substring, a list of substrings (all must
        appear), or null/absent to match anything.
        """
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, list):
            raise ValueError(f"script file {path} must contain a JSON list")
        entries = []
        for i, item in enumerate(raw):
            if not isinstance(item, dict) or "response" not in item:
                raise ValueError(f"script file {path}: entry {i} lacks a 'response'")
            match = item.get("match")
            if match is None:
                needles: tuple[str, ...] = ()
            elif isinstance(match, str):
                needles = (match,)
            else:
                needles = tuple(str(m) for m in match)
            entries.append(
                ScriptEntry(response=str(item["response"]), match=needles, once=bool(item.get("once", False)))
            )
        return cls(entries)

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(request)
            for entry in self.entries:
                if entry.matches(request):
                    entry.used = True
                    return ChatResponse(text=entry.response, backend="scripted")
        raise ScriptError(
            f"no script entry matches request starting with {request.user_text[:80]!r}"
        )


class RemoteLlm(LlmClient):
    """Chat-completions HTTP client with bounded retries and throttling.

    Transient failures (connection errors, HTTP 429, HTTP 5xx) are retried
    up to `retries` times with exponential backoff (base 1s doubling, plus
    jitter). Authentication failures are never retried. At most
    `concurrency` requests are in flight at once.
    """

    RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        retries: int = 3,
        concurrency: int = 4,
        timeout: float = 120.0,
        backoff_base: float = 1.0,
        session: requests.Session | None = None,
    ):
        if not endpoint:
            raise ValueError("remote LLM client requires an endpoint URL")
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.retries = retries
        self.timeout = timeout
        self.backoff_base = backoff_base
        self._semaphore = threading.Semaphore(max(1, concurrency))
        self._session = session or requests.Session()

    def _payload(self, request: ChatRequest) -> dict:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        return {
            "model": request.model or self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = self._payload(request)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: str = ""
        for attempt in range(self.retries + 1):
            if attempt:
                delay = self.backoff_base * 2 ** (attempt - 1)
                delay += random.uniform(0, delay * 0.1)
                logger.warning(
                    "retrying completion in %.2fs (attempt %d/%d): %s",
                    delay,
                    attempt,
                    self.retries,
                    last_error,
                )
                time.sleep(delay)
            try:
                with self._semaphore:
                    response = self._session.post(
                        self.endpoint, json=payload, headers=headers, timeout=self.timeout
                    )
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                continue
            if response.status_code in (401, 403):
                raise LlmAuthError(
                    f"authentication rejected (HTTP {response.status_code}); "
                    "check the configured API key environment variable"
                )
            if response.status_code in self.RETRYABLE_STATUS:
                last_error = f"HTTP {response.status_code}"
                continue
            if response.status_code != 200:
                raise LlmError(
                    f"completion failed with HTTP {response.status_code}: {response.text[:200]}"
                )
            try:
                body = response.json()
                text = body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise LlmError(f"malformed completion response: {exc}") from exc
            return ChatResponse(text=text, usage=body.get("usage"), backend=self.model)
        raise LlmTransportError(
            f"completion failed after {self.retries} retries; last error: {last_error}"
        )
