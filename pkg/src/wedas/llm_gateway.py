"""Chat-completion gateway with live (OpenAI-compatible) and scripted backends."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from importlib import resources
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

import httpx
import jsonschema

from .errors import AuthError, ConfigError, JsonExtractError, NetworkError, SchemaError, ScriptMiss

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown chat role {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


def system(content: str) -> ChatMessage:
    return ChatMessage("system", content)


def user(content: str) -> ChatMessage:
    return ChatMessage("user", content)


def assistant(content: str) -> ChatMessage:
    return ChatMessage("assistant", content)


@dataclass(frozen=True)
class DecodingConfig:
    temperature: float = 1.0
    top_p: float = 0.95
    min_p: float = 0.0
    top_k: int = -1
    max_tokens: int = 16384
    seed: int | None = None

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "temperature": self.temperature,
            "top_p": self.top_p,
            "min_p": self.min_p,
            "top_k": self.top_k,
            "max_tokens": self.max_tokens,
        }
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DecodingConfig":
        known = {k: data[k] for k in ("temperature", "top_p", "min_p", "top_k", "max_tokens", "seed") if k in data}
        return cls(**known)


@dataclass(frozen=True)
class Completion:
    text: str
    model_id: str
    usage: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if min(self.usage) < 0:
            raise ValueError("usage counters must be non-negative")


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def fingerprint(messages: Sequence[ChatMessage], cfg: DecodingConfig) -> str:
    """Stable SHA-256 over the canonical serialization of a request."""
    payload = {"messages": [m.to_dict() for m in messages], "cfg": cfg.to_dict()}
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


class ChatBackend(Protocol):
    def complete(self, messages: Sequence[ChatMessage], cfg: DecodingConfig) -> Completion: ...


class ScriptedBackend:
    """Replays fixture responses keyed by request fingerprint."""

    model_id = "scripted"

    def __init__(self, fixtures: Mapping[str, str] | None = None):
        self.fixtures: dict[str, str] = dict(fixtures or {})

    @classmethod
    def from_jsonl(cls, path: str | os.PathLike[str]) -> "ScriptedBackend":
        fixtures = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    fixtures[row["fingerprint"]] = row["response"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad fixture line ({exc})") from exc
        return cls(fixtures)

    def add(self, messages: Sequence[ChatMessage], cfg: DecodingConfig, response: str) -> str:
        fp = fingerprint(messages, cfg)
        self.fixtures[fp] = response
        return fp

    def complete(self, messages: Sequence[ChatMessage], cfg: DecodingConfig) -> Completion:
        fp = fingerprint(messages, cfg)
        try:
            text = self.fixtures[fp]
        except KeyError:
            raise ScriptMiss(fp) from None
        return Completion(text, self.model_id, (0, 0))


class RecordingBackend:
    """Wraps a response function and records every exchange as a scripted fixture."""

    model_id = "recorded"

    def __init__(self, respond: Callable[[Sequence[ChatMessage], DecodingConfig], str]):
        self.respond = respond
        self.records: dict[str, str] = {}
        self._lock = threading.Lock()

    def complete(self, messages: Sequence[ChatMessage], cfg: DecodingConfig) -> Completion:
        text = self.respond(messages, cfg)
        with self._lock:
            self.records[fingerprint(messages, cfg)] = text
        return Completion(text, self.model_id, (0, 0))

    def dump_jsonl(self, path: str | os.PathLike[str]) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for fp in sorted(self.records):
                fh.write(json.dumps({"fingerprint": fp, "response": self.records[fp]}, ensure_ascii=False) + "\n")


class TokenBucket:
    """Thread-safe requests-per-minute limiter."""

    def __init__(self, per_minute: float, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if per_minute <= 0:
            raise ValueError("rate must be positive")
        self.capacity = max(1.0, per_minute / 60.0)
        self.rate = per_minute / 60.0
        self.tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self._sleep(wait)


class OpenAIChatBackend:
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint."""

    def __init__(
        self,
        base_url: str,
        api_key: str,
        model: str,
        *,
        supports_extended_sampling: bool = False,
        max_retries: int = 4,
        backoff: float = 1.0,
        timeout: float = 600.0,
        requests_per_minute: float | None = None,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not base_url:
            raise ConfigError("LLM base URL is empty")
        if not model:
            raise ConfigError("LLM model name is empty")
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.api_key = api_key
        self.model_id = model
        self.supports_extended_sampling = supports_extended_sampling
        self.max_retries = max_retries
        self.backoff = backoff
        self.limiter = TokenBucket(requests_per_minute, sleep=sleep) if requests_per_minute else None
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep
        self._warned_dropped = False

    @classmethod
    def from_env(cls, model: str, **kwargs: Any) -> "OpenAIChatBackend":
        base = os.environ.get("LLM_BASE_URL", "")
        key = os.environ.get("LLM_API_KEY", "")
        if not base or not key:
            raise ConfigError(
                "LLM_BASE_URL and LLM_API_KEY must be set for a live model; pass --scripted-llm to run offline"
            )
        return cls(base, key, model, **kwargs)

    def _body(self, messages: Sequence[ChatMessage], cfg: DecodingConfig) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.model_id,
            "messages": [m.to_dict() for m in messages],
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
            "max_tokens": cfg.max_tokens,
        }
        if cfg.seed is not None:
            body["seed"] = cfg.seed
        if self.supports_extended_sampling:
            body["min_p"] = cfg.min_p
            body["top_k"] = cfg.top_k
        elif not self._warned_dropped:
            log.warning("endpoint does not advertise min_p/top_k; dropping them from requests")
            self._warned_dropped = True
        return body

    def complete(self, messages: Sequence[ChatMessage], cfg: DecodingConfig) -> Completion:
        body = self._body(messages, cfg)
        headers = {"Authorization": f"Bearer {self.api_key}"}
        attempt = 0
        while True:
            if self.limiter:
                self.limiter.acquire()
            try:
                resp = self._client.post(self.url, json=body, headers=headers)
            except httpx.TransportError as exc:
                err: Exception = NetworkError(f"LLM transport error: {exc}")
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"LLM endpoint rejected credentials (HTTP {resp.status_code})")
                if resp.status_code == 429 or resp.status_code >= 500:
                    err = NetworkError(f"LLM endpoint returned HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise NetworkError(f"LLM request failed with HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    try:
                        data = resp.json()
                        text = data["choices"][0]["message"]["content"] or ""
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        err = NetworkError(f"malformed completion payload: {exc}")
                    else:
                        usage = data.get("usage") or {}
                        return Completion(
                            text,
                            data.get("model", self.model_id),
                            (int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))),
                        )
            if attempt >= self.max_retries:
                raise err
            self._sleep(self.backoff * (2**attempt))
            attempt += 1


# -- JSON handling ---------------------------------------------------------------


def extract_json_object(text: str) -> dict[str, Any]:
    """Return the first balanced ``{...}`` in ``text`` that parses as a JSON object.

    Surrounding prose and markdown fences are ignored.
    """
    start = text.find("{")
    while start != -1:
        end = _match_brace(text, start)
        if end is not None:
            try:
                value = json.loads(text[start : end + 1])
            except json.JSONDecodeError:
                pass
            else:
                if isinstance(value, dict):
                    return value
        start = text.find("{", start + 1)
    raise JsonExtractError(f"no JSON object found in completion: {text[:120]!r}")


def _match_brace(text: str, start: int) -> int | None:
    depth = 0
    in_str = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_str:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i
    return None


_SCHEMA_FILES = {
    "judge": "judge_schema.json",
    "probe_generation": "probe_generation_schema.json",
    "plan": "plan_schema.json",
}
_schema_cache: dict[str, dict[str, Any]] = {}


def load_schema(schema_id: str) -> dict[str, Any]:
    if schema_id not in _schema_cache:
        try:
            name = _SCHEMA_FILES[schema_id]
        except KeyError:
            raise SchemaError(f"unknown schema id {schema_id!r}") from None
        text = resources.files("wedas.prompts").joinpath(name).read_text(encoding="utf-8")
        _schema_cache[schema_id] = json.loads(text)
    return _schema_cache[schema_id]


def validate(value: Any, schema_id: str) -> None:
    try:
        jsonschema.validate(value, load_schema(schema_id))
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{schema_id}: {exc.message} at {path}") from None


def parse_json_reply(text: str, schema_id: str) -> dict[str, Any]:
    value = extract_json_object(text)
    validate(value, schema_id)
    return value


class LLMGateway:
    """Uniform completion interface over a backend, with a call counter."""

    def __init__(self, backend: ChatBackend, cfg: DecodingConfig | None = None):
        self.backend = backend
        self.cfg = cfg or DecodingConfig()
        self.calls = 0
        self._lock = threading.Lock()

    def with_config(self, cfg: DecodingConfig) -> "LLMGateway":
        return LLMGateway(self.backend, cfg)

    def complete(self, messages: Sequence[ChatMessage], cfg: DecodingConfig | None = None) -> Completion:
        if not messages:
            raise ValueError("messages must be non-empty")
        with self._lock:
            self.calls += 1
        return self.backend.complete(list(messages), cfg or self.cfg)

    def complete_json(
        self, messages: Sequence[ChatMessage], schema_id: str, cfg: DecodingConfig | None = None
    ) -> dict[str, Any]:
        """Complete and parse a JSON object, allowing one repair round-trip."""
        messages = list(messages)
        first = self.complete(messages, cfg)
        try:
            return parse_json_reply(first.text, schema_id)
        except (JsonExtractError, SchemaError) as exc:
            log.info("repairing JSON reply for %s: %s", schema_id, exc)
            repair = messages + [
                assistant(first.text),
                user(
                    "Your previous reply could not be used: "
                    f"{exc}. Reply again with only the corrected JSON object."
                ),
            ]
        second = self.complete(repair, cfg)
        return parse_json_reply(second.text, schema_id)


def load_prompt(name: str) -> str:
    return resources.files("wedas.prompts").joinpath(name).read_text(encoding="utf-8")


def messages_from_dicts(rows: Iterable[Mapping[str, str]]) -> list[ChatMessage]:
    return [ChatMessage(r["role"], r["content"]) for r in rows]
