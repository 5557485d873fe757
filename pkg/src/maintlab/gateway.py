"""Provider-agnostic chat-completion client with record/replay cassettes.

Requests are content-addressed by a fingerprint over messages, sampling
parameters, model id and tag. Cassette files are line-delimited JSON under
the run directory; they never contain credentials, only fingerprints and
response texts. In replay mode a missing fingerprint is a hard error, so
a complete cassette makes an entire run byte-reproducible.

Live transport speaks the OpenAI-compatible chat-completions protocol;
endpoint and key come from OPENAI_BASE_URL / OPENAI_API_KEY.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping

from .errors import JsonExtractError, ProviderError, ReplayMissError, TransientProviderError

DEFAULT_TEMPERATURE = 0.3
DEFAULT_TOP_P = 0.95
DEFAULT_MAX_ATTEMPTS = 3

_FENCE_RE = re.compile(r"```[ \t]*[\w+-]*[ \t]*\r?\n(.*?)```", re.DOTALL)
_TRAILING_COMMA_RE = re.compile(r",\s*([}\]])")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]
    model_id: str
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    tag: str = ""

    def __post_init__(self):
        object.__setattr__(
            self, "messages", tuple((role, text) for role, text in self.messages)
        )


def user_request(prompt: str, model_id: str, tag: str = "", **sampling) -> ChatRequest:
    return ChatRequest(messages=(("user", prompt),), model_id=model_id, tag=tag, **sampling)


def fingerprint(request: ChatRequest) -> str:
    """Stable content hash; message order is semantic, map order is not."""
    payload = json.dumps(
        {
            "messages": [[role, text] for role, text in request.messages],
            "model_id": request.model_id,
            "temperature": request.temperature,
            "top_p": request.top_p,
            "tag": request.tag,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class CassetteMode(str, Enum):
    RECORD = "record"
    REPLAY = "replay"
    LIVE = "live"


class Cassette:
    """Content-addressed response store backed by an append-only JSONL file."""

    def __init__(self, path: str | Path | None = None, mode: CassetteMode = CassetteMode.LIVE):
        self.path = Path(path) if path is not None else None
        self.mode = CassetteMode(mode)
        self.entries: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with self.path.open(encoding="utf-8") as handle:
                for line in handle:
                    if line.strip():
                        entry = json.loads(line)
                        self.entries[entry["fingerprint"]] = entry["response"]

    def lookup(self, fp: str) -> str | None:
        return self.entries.get(fp)

    def record(self, fp: str, response: str, tag: str = "", model_id: str = "") -> None:
        with self._lock:
            self.entries[fp] = response
            if self.path is not None:
                line = json.dumps(
                    {"fingerprint": fp, "tag": tag, "model_id": model_id, "response": response},
                    sort_keys=True,
                )
                with self.path.open("a", encoding="utf-8") as handle:
                    handle.write(line + "\n")


Transport = Callable[[ChatRequest], str]


class HttpChatTransport:
    """OpenAI-compatible chat-completions call via requests."""

    def __init__(self, base_url: str | None = None, api_key: str | None = None, timeout: float = 120.0):
        self.base_url = (base_url or os.environ.get("OPENAI_BASE_URL", "https://api.openai.com/v1")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("OPENAI_API_KEY", "")
        self.timeout = timeout

    def __call__(self, request: ChatRequest) -> str:
        import requests

        if not self.api_key:
            raise ProviderError("no API key configured (OPENAI_API_KEY)")
        try:
            response = requests.post(
                f"{self.base_url}/chat/completions",
                headers={"Authorization": f"Bearer {self.api_key}"},
                json={
                    "model": request.model_id,
                    "messages": [{"role": role, "content": text} for role, text in request.messages],
                    "temperature": request.temperature,
                    "top_p": request.top_p,
                },
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransientProviderError(f"transport failure: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientProviderError(f"provider returned {response.status_code}")
        if response.status_code != 200:
            raise ProviderError(f"provider returned {response.status_code}: {response.text[:500]}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ProviderError(f"malformed provider response: {exc}") from exc


class LlmGateway:
    """Chat-completion client honoring the cassette mode.

    Retries cover only transient failures (transport errors, rate limits)
    and never re-issue a request that already succeeded.
    """

    def __init__(
        self,
        transport: Transport | None = None,
        cassette: Cassette | None = None,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_base: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
        requests_per_minute: float | None = None,
    ):
        self.transport = transport
        self.cassette = cassette or Cassette()
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.sleep = sleep
        self._min_interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self._last_call = 0.0
        self._rate_lock = threading.Lock()

    def complete(self, request: ChatRequest) -> str:
        fp = fingerprint(request)
        if self.cassette.mode == CassetteMode.REPLAY:
            recorded = self.cassette.lookup(fp)
            if recorded is None:
                raise ReplayMissError(fp)
            return recorded
        if self.cassette.mode == CassetteMode.RECORD:
            recorded = self.cassette.lookup(fp)
            if recorded is not None:
                return recorded
        response = self._call_with_retries(request)
        if self.cassette.mode == CassetteMode.RECORD:
            self.cassette.record(fp, response, tag=request.tag, model_id=request.model_id)
        return response

    def _call_with_retries(self, request: ChatRequest) -> str:
        if self.transport is None:
            self.transport = HttpChatTransport()
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            self._throttle()
            try:
                return self.transport(request)
            except TransientProviderError as exc:
                last_error = exc
                if attempt + 1 < self.max_attempts:
                    self.sleep(self.backoff_base * (2**attempt))
        raise ProviderError(
            f"request failed after {self.max_attempts} attempts: {last_error}"
        ) from last_error

    def _throttle(self) -> None:
        if not self._min_interval:
            return
        with self._rate_lock:
            now = time.monotonic()
            wait = self._last_call + self._min_interval - now
            if wait > 0:
                self.sleep(wait)
            self._last_call = time.monotonic()


@dataclass(frozen=True)
class ExtractedCode:
    code: str
    fenced: bool


def extract_code_block(response: str) -> ExtractedCode:
    """First fenced code block, or the whole trimmed response flagged as
    a fallback when no fence is present."""
    match = _FENCE_RE.search(response)
    if match:
        return ExtractedCode(code=match.group(1).strip("\n"), fenced=True)
    return ExtractedCode(code=response.strip(), fenced=False)


def extract_json(response: str) -> Mapping:
    """Parse the largest brace-delimited JSON object out of a response.

    One repair pass (fence stripping, trailing-comma removal) runs before
    giving up; failures raise :class:`JsonExtractError` carrying the raw
    response for transcripts.
    """
    for candidate in _json_candidates(response):
        try:
            value = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(value, dict):
            return value
    raise JsonExtractError("no JSON object found in response", raw_response=response)


def _json_candidates(response: str):
    yield response
    start, end = response.find("{"), response.rfind("}")
    region = response[start : end + 1] if start != -1 and end > start else ""
    if region:
        yield region
    # repair pass: strip fences, then trailing commas
    stripped = _FENCE_RE.search(response)
    if stripped:
        yield stripped.group(1)
    if region:
        yield _TRAILING_COMMA_RE.sub(r"\1", region)
    if stripped:
        yield _TRAILING_COMMA_RE.sub(r"\1", stripped.group(1))
