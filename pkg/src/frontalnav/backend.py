"""Decision providers: OpenAI-compatible remote endpoint, scripted replay, recorder."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional, Protocol

import httpx

from .prompting import DecisionParseError, PromptBundle, correction_message

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-4o-2024-08-06"
MAX_REPROMPTS = 2


class ProviderFailure(RuntimeError):
    """The provider could not deliver a usable reply within its retry budget."""

    def __init__(self, message: str, last_error: Optional[Exception] = None, replies: tuple = ()):
        super().__init__(message)
        self.last_error = last_error
        self.replies = replies


class ScriptKeyError(LookupError):
    """A scripted provider was asked for a reply its script does not contain."""


@dataclass(frozen=True)
class ProviderResponse:
    raw_text: str
    latency: float = 0.0
    usage: Optional[dict] = None


class DecisionProvider(Protocol):
    def decide(self, bundle: PromptBundle) -> ProviderResponse: ...


# --------------------------------------------------------------------------
# scripted


@dataclass(frozen=True)
class ScriptEntry:
    episode: str
    ordinal: int
    kind: str
    raw_text: str
    attempt: int = 0

    @property
    def key(self) -> tuple:
        return (self.episode, self.ordinal, self.kind, self.attempt)


def script_key(bundle: PromptBundle) -> tuple:
    return (bundle.episode_id, bundle.ordinal, bundle.kind.value, bundle.attempt)


def _entry_from_json(obj: dict, where: str) -> ScriptEntry:
    try:
        response = obj["response"]
        if not isinstance(response, str):
            response = json.dumps(response, ensure_ascii=False)
        entry = ScriptEntry(
            episode=str(obj["episode"]),
            ordinal=int(obj["ordinal"]),
            kind=str(obj["kind"]),
            raw_text=response,
            attempt=int(obj.get("attempt", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{where}: bad script entry ({exc})") from None
    if entry.kind not in ("initial", "step", "disambiguation"):
        raise ValueError(f"{where}: unknown kind {entry.kind!r}")
    return entry


def load_script(path) -> list[ScriptEntry]:
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError(f"{path}: script must be a JSON array")
    return [_entry_from_json(obj, f"{path}[{i}]") for i, obj in enumerate(data)]


class ScriptedProvider:
    """Replays canned replies keyed by (episode, ordinal, kind, attempt). No I/O."""

    def __init__(self, entries):
        self._table: dict[tuple, str] = {}
        for e in entries:
            if e.key in self._table:
                raise ValueError(f"duplicate script key {e.key}")
            self._table[e.key] = e.raw_text
        self._lock = threading.Lock()
        self.calls: list[tuple] = []

    @classmethod
    def from_file(cls, path) -> "ScriptedProvider":
        return cls(load_script(path))

    def decide(self, bundle: PromptBundle) -> ProviderResponse:
        key = script_key(bundle)
        with self._lock:
            self.calls.append(key)
        try:
            return ProviderResponse(self._table[key], 0.0)
        except KeyError:
            ep, ordinal, kind, attempt = key
            raise ScriptKeyError(
                f"no script entry for episode={ep!r} ordinal={ordinal} kind={kind!r} attempt={attempt}"
            ) from None


# --------------------------------------------------------------------------
# remote


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str = "https://api.openai.com/v1"
    model: str = DEFAULT_MODEL
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3
    api_key_env: str = "OPENAI_API_KEY"
    max_tokens: Optional[int] = None
    max_concurrent: int = 2
    backoff_base: float = 1.0
    backoff_cap: float = 30.0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")


def chat_payload(bundle: PromptBundle, cfg: ProviderConfig) -> dict:
    content: list[dict] = [{"type": "text", "text": bundle.user_text}]
    for img in bundle.images:
        content.append({"type": "text", "text": f"Image {img.view_id}:"})
        content.append({"type": "image_url", "image_url": {"url": img.data_url()}})
    messages: list[dict] = [
        {"role": "system", "content": bundle.system_text},
        {"role": "user", "content": content},
    ]
    for previous, message in bundle.corrections:
        messages.append({"role": "assistant", "content": previous})
        messages.append({"role": "user", "content": message})
    payload: dict[str, Any] = {
        "model": cfg.model,
        "messages": messages,
        "temperature": cfg.temperature,
    }
    if cfg.max_tokens is not None:
        payload["max_tokens"] = cfg.max_tokens
    return payload


def _completion_text(body: dict) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise ValueError("response has no choices[0].message.content") from None
    if isinstance(content, list):
        content = "".join(part.get("text", "") for part in content if isinstance(part, dict))
    if not isinstance(content, str):
        raise ValueError("message content is not text")
    return content


def _retry_after(resp: httpx.Response) -> Optional[float]:
    value = resp.headers.get("retry-after")
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


class RemoteProvider:
    """OpenAI-compatible chat-completions client with retry and a concurrency cap."""

    def __init__(
        self,
        cfg: ProviderConfig,
        client: Optional[httpx.Client] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self._client = client or httpx.Client(timeout=cfg.timeout)
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(cfg.max_concurrent)
        self._count_lock = threading.Lock()
        self.request_count = 0

    @property
    def url(self) -> str:
        base = self.cfg.endpoint.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/chat/completions"

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _backoff(self, attempt: int) -> float:
        return min(self.cfg.backoff_cap, self.cfg.backoff_base * 2**attempt)

    def decide(self, bundle: PromptBundle) -> ProviderResponse:
        payload = chat_payload(bundle, self.cfg)
        last: Optional[Exception] = None
        for attempt in range(self.cfg.max_retries + 1):
            delay = self._backoff(attempt)
            start = time.monotonic()
            try:
                with self._gate:
                    with self._count_lock:
                        self.request_count += 1
                    resp = self._client.post(self.url, json=payload, headers=self._headers())
            except httpx.HTTPError as exc:
                last = exc
                logger.warning("request failed (%s), attempt %d", exc, attempt + 1)
            else:
                latency = time.monotonic() - start
                if resp.status_code == 200:
                    try:
                        body = resp.json()
                        return ProviderResponse(_completion_text(body), latency, body.get("usage"))
                    except ValueError as exc:
                        raise ProviderFailure(f"unusable completion body: {exc}", exc) from None
                last = RuntimeError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                if resp.status_code == 429:
                    delay = _retry_after(resp) or delay
                elif resp.status_code < 500:
                    raise ProviderFailure(f"provider rejected the request: {last}", last)
                logger.warning("provider returned %d, attempt %d", resp.status_code, attempt + 1)
            if attempt < self.cfg.max_retries:
                self._sleep(delay)
        raise ProviderFailure(
            f"provider unavailable after {self.cfg.max_retries + 1} attempts: {last}", last
        )


# --------------------------------------------------------------------------
# recording wrapper


class RecordingProvider:
    """Passes calls through and keeps (key, raw reply, latency) records."""

    def __init__(self, inner: DecisionProvider, path: Optional[Path] = None):
        self.inner = inner
        self.path = Path(path) if path else None
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def decide(self, bundle: PromptBundle) -> ProviderResponse:
        resp = self.inner.decide(bundle)
        rec = {
            "episode": bundle.episode_id,
            "ordinal": bundle.ordinal,
            "kind": bundle.kind.value,
            "attempt": bundle.attempt,
            "response": resp.raw_text,
            "latency": resp.latency,
        }
        with self._lock:
            self.records.append(rec)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
        return resp

    def as_script(self) -> list[dict]:
        """Recorded replies in script-file form, for replay with ScriptedProvider."""
        return [{k: r[k] for k in ("episode", "ordinal", "kind", "attempt", "response")} for r in self.records]


# --------------------------------------------------------------------------
# parse retry


@dataclass
class ParsedReply:
    decision: Any
    replies: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    @property
    def retries(self) -> int:
        return len(self.replies) - 1


def with_parse_retry(
    provider: DecisionProvider,
    bundle: PromptBundle,
    parse: Callable[[str], Any],
    max_reprompts: int = MAX_REPROMPTS,
) -> ParsedReply:
    """Ask, parse, and re-prompt with the violation quoted back on failure."""
    replies: list[ProviderResponse] = []
    violations: list[str] = []
    current = bundle
    for attempt in range(max_reprompts + 1):
        resp = provider.decide(current)
        replies.append(resp)
        try:
            return ParsedReply(parse(resp.raw_text), replies, violations)
        except DecisionParseError as exc:
            violations.append(f"{type(exc).__name__}: {exc}")
            if attempt == max_reprompts:
                raise ProviderFailure(
                    f"no valid {bundle.kind.value} decision after {max_reprompts} re-prompts: {exc}",
                    exc,
                    tuple(replies),
                ) from None
            note = correction_message(exc, exc.fragment)
            current = replace(
                current,
                attempt=attempt + 1,
                corrections=current.corrections + ((resp.raw_text, note),),
            )
    raise AssertionError("unreachable")
