"""Provider-agnostic chat-completion client with budgeting, retry, and a stub.

Two HTTP dialects are built in (an OpenAI-style ``/chat/completions`` body
and a Gemini-style ``:generateContent`` body) plus a deterministic offline
stub that replays fixture files, used for all tests and dry runs. No request
is ever issued whose estimated token total exceeds the configured context
window; the budget check happens before any network activity.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import requests

if TYPE_CHECKING:
    from .prompts import PromptBundle

logger = logging.getLogger(__name__)

# Crude chars-per-token heuristic with a safety margin; it only needs to be
# conservative enough to prevent context overflows, not provider-exact.
_CHARS_PER_TOKEN = 4
_SAFETY_MARGIN = 1.10
_BACKOFF_CAP_S = 60.0
_BACKOFF_JITTER = 0.25


class ProviderError(Exception):
    """Base class for provider failures."""


class ContextOverflow(ProviderError):
    """The request would not fit the provider's context window."""

    def __init__(self, required: int, available: int, hint: str = "") -> None:
        self.required = required
        self.available = available
        message = f"request needs ~{required} tokens but the context window allows {available}"
        if hint:
            message += f"; {hint}"
        super().__init__(message)


class AuthError(ProviderError):
    """Missing or rejected API credentials."""


class TransientError(ProviderError):
    """A retryable transport failure (timeout, rate limit, 5xx)."""


class ExhaustedRetries(ProviderError):
    """All retry attempts failed; carries the last transport error."""

    def __init__(self, attempts: int, last_error: Exception) -> None:
        self.attempts = attempts
        self.last_error = last_error
        super().__init__(f"gave up after {attempts} attempts: {last_error}")


class StubFixtureMissing(ProviderError):
    """The stub provider has no canned response for a request key."""


@dataclass(frozen=True)
class ProviderConfig:
    """Connection, budgeting, and pacing settings for one provider."""

    dialect: str = "openai"  # "openai" | "gemini" | "stub"
    base_url: str = "https://api.openai.com/v1"
    model_name: str = "gpt-4.1"
    api_key_env: str = "PAPERLENS_API_KEY"
    context_window_tokens: int = 1_000_000
    max_output_tokens: int = 65_536
    max_retries: int = 5
    backoff_base_ms: int = 500
    max_inflight: int = 2
    # Sampling settings are provider-specific and unreported upstream;
    # temperature 0 keeps repeated runs as comparable as possible.
    temperature: float = 0.0
    timeout_s: float = 600.0
    fixtures_dir: str | None = None

    def __post_init__(self) -> None:
        if self.context_window_tokens < self.max_output_tokens:
            raise ValueError("context_window_tokens must be >= max_output_tokens")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.backoff_base_ms <= 0:
            raise ValueError("backoff_base_ms must be positive")


@dataclass
class ModelResponse:
    """One completed provider call."""

    text: str
    input_tokens: int = 0
    output_tokens: int = 0
    latency_ms: int = 0
    attempts: int = 1


def estimate_tokens(text: str) -> int:
    """Conservative token estimate: ceil(chars / 4) plus a 10% margin.

    Monotone in input length; empty text estimates to zero.
    """
    if not text:
        return 0
    return math.ceil(math.ceil(len(text) / _CHARS_PER_TOKEN) * _SAFETY_MARGIN)


def stub_key(kind: str, payload_refs: tuple[str, ...] | list[str]) -> str:
    """Stable fixture key for a request: hash of (kind, sorted payload refs)."""
    material = kind + "|" + "|".join(sorted(str(r) for r in payload_refs))
    return hashlib.sha256(material.encode("utf-8")).hexdigest()[:16]


class ChatClient:
    """Shared budgeting, pacing, retry, and audit logic for all providers."""

    def __init__(self, config: ProviderConfig, audit_path: str | Path | None = None) -> None:
        self.config = config
        self.audit_path = Path(audit_path) if audit_path else None
        self._gate = threading.BoundedSemaphore(config.max_inflight)
        self._lock = threading.Lock()
        self._inflight = 0
        self.inflight_high_water = 0
        self.calls = 0

    def complete(self, bundle: "PromptBundle", payload_text: str = "") -> ModelResponse:
        """Send an assembled prompt plus payload and return the response.

        Raises ContextOverflow before any network call when the estimated
        total would not fit; retries transient transport failures with
        exponential backoff and jitter up to ``max_retries``.
        """
        prompt = bundle.render()
        if payload_text:
            prompt = prompt + "\n\n" + payload_text

        required = estimate_tokens(prompt) + self.config.max_output_tokens
        if required > self.config.context_window_tokens:
            raise ContextOverflow(required, self.config.context_window_tokens)

        key = f"{bundle.kind.value}-{stub_key(bundle.kind.value, bundle.payload_refs)}"
        start = time.perf_counter()
        last_error: Exception | None = None
        attempts = 0
        for attempt in range(self.config.max_retries + 1):
            attempts = attempt + 1
            try:
                with self._gate:
                    with self._lock:
                        self._inflight += 1
                        self.inflight_high_water = max(self.inflight_high_water, self._inflight)
                        self.calls += 1
                    try:
                        response = self._send(prompt, key)
                    finally:
                        with self._lock:
                            self._inflight -= 1
                break
            except TransientError as exc:
                last_error = exc
                if attempt == self.config.max_retries:
                    raise ExhaustedRetries(attempts, exc) from exc
                delay = self._backoff_delay(attempt)
                logger.warning(
                    "transient provider failure (attempt %d/%d), retrying in %.1fs: %s",
                    attempts,
                    self.config.max_retries + 1,
                    delay,
                    exc,
                )
                time.sleep(delay)
        else:  # pragma: no cover - loop always breaks or raises
            raise ExhaustedRetries(attempts, last_error or ProviderError("no attempts made"))

        response.attempts = attempts
        response.latency_ms = int((time.perf_counter() - start) * 1000)
        if not response.input_tokens:
            response.input_tokens = estimate_tokens(prompt)
        if not response.output_tokens:
            response.output_tokens = estimate_tokens(response.text)
        self._audit(bundle.kind.value, key, prompt, response)
        return response

    def _backoff_delay(self, attempt: int) -> float:
        base = self.config.backoff_base_ms / 1000.0 * (2**attempt)
        jitter = random.uniform(1 - _BACKOFF_JITTER, 1 + _BACKOFF_JITTER)
        return min(base * jitter, _BACKOFF_CAP_S)

    def _audit(self, kind: str, key: str, prompt: str, response: ModelResponse) -> None:
        if self.audit_path is None:
            return
        # Bodies are recorded for traceability; credentials never are.
        entry = {
            "ts": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "kind": kind,
            "key": key,
            "model": self.config.model_name,
            "request_body": prompt,
            "response_body": response.text,
            "input_tokens": response.input_tokens,
            "output_tokens": response.output_tokens,
            "attempts": response.attempts,
        }
        with self._lock:
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    def _send(self, prompt: str, key: str) -> ModelResponse:
        raise NotImplementedError


class HttpChatClient(ChatClient):
    """HTTP chat-completion client speaking one of the built-in dialects."""

    def __init__(
        self,
        config: ProviderConfig,
        audit_path: str | Path | None = None,
        session: requests.Session | None = None,
    ) -> None:
        super().__init__(config, audit_path)
        self._session = session or requests.Session()

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise AuthError(
                f"no API key found in environment variable {self.config.api_key_env!r}"
            )
        return key

    def _send(self, prompt: str, key: str) -> ModelResponse:
        api_key = self._api_key()
        cfg = self.config
        if cfg.dialect == "gemini":
            url = f"{cfg.base_url.rstrip('/')}/models/{cfg.model_name}:generateContent"
            headers = {"x-goog-api-key": api_key, "Content-Type": "application/json"}
            body = {
                "contents": [{"role": "user", "parts": [{"text": prompt}]}],
                "generationConfig": {
                    "maxOutputTokens": cfg.max_output_tokens,
                    "temperature": cfg.temperature,
                },
            }
        else:
            url = f"{cfg.base_url.rstrip('/')}/chat/completions"
            headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
            body = {
                "model": cfg.model_name,
                "messages": [{"role": "user", "content": prompt}],
                "max_tokens": cfg.max_output_tokens,
                "temperature": cfg.temperature,
            }

        try:
            resp = self._session.post(url, json=body, headers=headers, timeout=cfg.timeout_s)
        except requests.RequestException as exc:
            raise TransientError(f"transport failure: {exc}") from exc

        if resp.status_code in (401, 403):
            raise AuthError(f"provider rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code != 200:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")

        try:
            data = resp.json()
        except ValueError as exc:
            raise TransientError(f"non-JSON response body: {exc}") from exc

        return self._parse_body(data)

    def _parse_body(self, data: dict) -> ModelResponse:
        if self.config.dialect == "gemini":
            try:
                parts = data["candidates"][0]["content"]["parts"]
                text = "".join(p.get("text", "") for p in parts)
            except (KeyError, IndexError, TypeError) as exc:
                raise ProviderError(f"malformed response body: {exc}") from exc
            usage = data.get("usageMetadata", {})
            return ModelResponse(
                text=text,
                input_tokens=int(usage.get("promptTokenCount", 0)),
                output_tokens=int(usage.get("candidatesTokenCount", 0)),
            )
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed response body: {exc}") from exc
        usage = data.get("usage", {})
        return ModelResponse(
            text=text or "",
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
        )


@dataclass
class StubScript:
    """Scripted failures for the stub: how often each request key fails.

    A count of -1 means the key fails on every attempt.
    """

    fail_counts: dict[str, int] = field(default_factory=dict)

    def should_fail(self, key: str) -> bool:
        remaining = self.fail_counts.get(key, 0)
        if remaining == 0:
            return False
        if remaining > 0:
            self.fail_counts[key] = remaining - 1
        return True


class StubChatClient(ChatClient):
    """Deterministic offline provider replaying fixture files.

    Responses live in a fixtures directory as ``{kind}-{key}.txt`` where
    ``key`` is ``stub_key(kind, payload_refs)``. Identical inputs always
    yield identical responses.
    """

    def __init__(
        self,
        config: ProviderConfig,
        audit_path: str | Path | None = None,
        script: StubScript | None = None,
        default_response: str | None = None,
    ) -> None:
        super().__init__(config, audit_path)
        self.fixtures_dir = Path(config.fixtures_dir) if config.fixtures_dir else None
        self.script = script or StubScript()
        self.default_response = default_response
        self.send_delay_s = 0.0  # test hook for concurrency assertions

    def _send(self, prompt: str, key: str) -> ModelResponse:
        if self.send_delay_s:
            time.sleep(self.send_delay_s)
        if self.script.should_fail(key):
            raise TransientError(f"scripted failure for key {key}")
        if self.fixtures_dir is not None:
            path = self.fixtures_dir / f"{key}.txt"
            if path.exists():
                return ModelResponse(text=path.read_text(encoding="utf-8"))
        if self.default_response is not None:
            return ModelResponse(text=self.default_response)
        raise StubFixtureMissing(
            f"no stub fixture {key}.txt in {self.fixtures_dir or '(no fixtures dir)'}"
        )


def write_stub_fixture(
    fixtures_dir: str | Path,
    kind: str,
    payload_refs: tuple[str, ...] | list[str],
    text: str,
) -> Path:
    """Create a canned stub response for (kind, payload refs); returns its path."""
    fixtures_dir = Path(fixtures_dir)
    fixtures_dir.mkdir(parents=True, exist_ok=True)
    path = fixtures_dir / f"{kind}-{stub_key(kind, payload_refs)}.txt"
    path.write_text(text, encoding="utf-8")
    return path


def make_client(
    config: ProviderConfig,
    audit_path: str | Path | None = None,
    session: requests.Session | None = None,
) -> ChatClient:
    """Build the client matching the configured dialect."""
    if config.dialect == "stub":
        return StubChatClient(config, audit_path)
    if config.dialect in ("openai", "gemini"):
        return HttpChatClient(config, audit_path, session=session)
    raise ValueError(f"unknown provider dialect {config.dialect!r}")
