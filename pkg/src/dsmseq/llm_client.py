"""Text-completion backends: scripted replay for tests, chat-style HTTP for live runs."""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol

import httpx


class LlmError(RuntimeError):
    pass


class AuthenticationError(LlmError):
    pass


class RateLimitError(LlmError):
    pass


class LlmTimeoutError(LlmError):
    pass


class TransportError(LlmError):
    pass


class ScriptExhaustedError(LlmError):
    pass


@dataclass(frozen=True)
class LlmRequest:
    prompt: str
    model_name: str = ""
    max_output_tokens: int = 1024
    temperature_override: float | None = None

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass(frozen=True)
class LlmResponse:
    text: str
    latency: float = 0.0
    usage: dict = field(default_factory=dict)
    backend: str = ""


class Backend(Protocol):
    def complete(self, request: LlmRequest) -> LlmResponse: ...


class ScriptedBackend:
    """Replays a fixed list of responses in order.

    An item that is an exception instance is raised instead of returned, which
    lets tests simulate transport failures. A backend belongs to one run.
    """

    name = "scripted"

    def __init__(self, responses):
        self._responses = list(responses)
        self.consumed = 0
        self.requests: list[LlmRequest] = []

    def complete(self, request: LlmRequest) -> LlmResponse:
        if self.consumed >= len(self._responses):
            raise ScriptExhaustedError(f"script exhausted after {self.consumed} responses")
        item = self._responses[self.consumed]
        self.consumed += 1
        self.requests.append(request)
        if isinstance(item, BaseException):
            raise item
        return LlmResponse(text=item, backend=self.name)

    @property
    def remaining(self) -> int:
        return len(self._responses) - self.consumed


def scripted_backend(responses) -> ScriptedBackend:
    return ScriptedBackend(responses)


class CallbackBackend:
    """Wraps a plain ``prompt -> text`` function."""

    def __init__(self, fn: Callable[[str], str], name: str = "callback"):
        self._fn = fn
        self.name = name

    def complete(self, request: LlmRequest) -> LlmResponse:
        start = time.perf_counter()
        text = self._fn(request.prompt)
        return LlmResponse(text=text, latency=time.perf_counter() - start, backend=self.name)


@dataclass(frozen=True)
class BackendProfile:
    name: str
    endpoint: str
    model: str
    auth_env: str
    style: str = "openai"
    max_output_tokens: int = 4096

    @classmethod
    def from_dict(cls, data: dict) -> "BackendProfile":
        missing = [k for k in ("name", "endpoint", "model", "auth_env") if k not in data]
        if missing:
            raise ValueError(f"backend profile missing fields: {', '.join(missing)}")
        style = data.get("style", "openai")
        if style not in ("openai", "anthropic"):
            raise ValueError(f"unknown profile style {style!r}")
        return cls(
            name=data["name"],
            endpoint=data["endpoint"],
            model=data["model"],
            auth_env=data["auth_env"],
            style=style,
            max_output_tokens=int(data.get("max_output_tokens", 4096)),
        )


def load_profile(path: str | Path) -> BackendProfile:
    return BackendProfile.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


_in_flight = threading.BoundedSemaphore(8)


def set_max_in_flight(limit: int) -> None:
    """Cap concurrent live requests for this process."""
    global _in_flight
    if limit < 1:
        raise ValueError("limit must be >= 1")
    _in_flight = threading.BoundedSemaphore(limit)


class HttpBackend:
    """Chat-completions style JSON backend with retry on transient failures."""

    def __init__(
        self,
        profile: BackendProfile,
        api_key: str | None = None,
        client: httpx.Client | None = None,
        max_attempts: int = 3,
        backoff_base: float = 1.0,
        timeout: float = 120.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.profile = profile
        self.name = profile.name
        self.api_key = api_key if api_key is not None else os.environ.get(profile.auth_env, "")
        self.client = client or httpx.Client(timeout=timeout)
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.sleep = sleep
        self.last_request_body: dict | None = None

    def build_body(self, request: LlmRequest) -> dict:
        body = {
            "model": request.model_name or self.profile.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_output_tokens,
        }
        if request.temperature_override is not None:
            body["temperature"] = request.temperature_override
        return body

    def _headers(self) -> dict:
        if self.profile.style == "anthropic":
            return {"x-api-key": self.api_key, "anthropic-version": "2023-06-01"}
        return {"Authorization": f"Bearer {self.api_key}"}

    def _extract(self, payload: dict) -> tuple[str, dict]:
        if self.profile.style == "anthropic":
            text = "".join(part.get("text", "") for part in payload.get("content", []))
        else:
            text = payload["choices"][0]["message"]["content"] or ""
        return text, payload.get("usage", {}) or {}

    def complete(self, request: LlmRequest) -> LlmResponse:
        if not self.api_key:
            raise AuthenticationError(f"no credentials in ${self.profile.auth_env}")
        body = self.build_body(request)
        self.last_request_body = body
        last: LlmError | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self.sleep(self.backoff_base * 2 ** (attempt - 1))
            start = time.perf_counter()
            try:
                with _in_flight:
                    resp = self.client.post(self.profile.endpoint, json=body, headers=self._headers())
            except httpx.TimeoutException as exc:
                last = LlmTimeoutError(f"{self.name}: request timed out ({exc})")
                continue
            except httpx.TransportError as exc:
                last = TransportError(f"{self.name}: {exc}")
                continue
            latency = time.perf_counter() - start
            if resp.status_code in (401, 403):
                raise AuthenticationError(f"{self.name}: HTTP {resp.status_code}")
            if resp.status_code == 429:
                last = RateLimitError(f"{self.name}: rate limited")
                continue
            if resp.status_code >= 500:
                last = TransportError(f"{self.name}: HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise LlmError(f"{self.name}: HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                text, usage = self._extract(resp.json())
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise LlmError(f"{self.name}: unexpected response shape ({exc})") from exc
            return LlmResponse(text=text, latency=latency, usage=usage, backend=self.name)
        assert last is not None
        raise last


class Transcript:
    """Append-only JSON-lines log of every completion call in a run."""

    def __init__(self, path: str | Path, run_id: str):
        self.path = Path(path)
        self.run_id = run_id
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def record(self, iteration: int, request: LlmRequest, response: LlmResponse | None, error: str | None = None):
        row = {
            "run": self.run_id,
            "iter": iteration,
            "prompt": request.prompt,
            "response": response.text if response else "",
            "latency_ms": int(round((response.latency if response else 0.0) * 1000)),
            "ts": datetime.now(timezone.utc).isoformat(),
        }
        if response and response.usage:
            row["usage"] = response.usage
        if error:
            row["error"] = error
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_transcript(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
