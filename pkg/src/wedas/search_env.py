"""Search backends: a live Serper-compatible client and a deterministic local corpus.

Every backend maps a :class:`SearchQuery` to an :class:`Observation`, a ranked
list of (title, snippet, url) documents. :func:`textualize` turns an
observation into the plain string the alignment metrics and the judge compare
against the query.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol

import httpx

from .errors import AuthError, ConfigError, EmptyCorpus, NetworkError
from .text_metrics import CorpusStats, normalize, weighted_cosine

log = logging.getLogger(__name__)

DEFAULT_K = 10
SERPER_ENDPOINT = "https://google.serper.dev/search"


@dataclass(frozen=True)
class SearchQuery:
    text: str
    k: int = DEFAULT_K

    def __post_init__(self):
        if not normalize(self.text).normalized:
            raise ValueError("search query is empty after normalization")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class Document:
    title: str
    snippet: str
    url: str
    rank: int

    def to_dict(self) -> dict[str, Any]:
        return {"title": self.title, "snippet": self.snippet, "url": self.url, "rank": self.rank}


@dataclass(frozen=True)
class Observation:
    query: SearchQuery
    documents: tuple[Document, ...]
    backend_id: str
    fetched_at: float = 0.0

    def __post_init__(self):
        if len(self.documents) > self.query.k:
            raise ValueError("observation holds more documents than requested")
        ranks = [d.rank for d in self.documents]
        if ranks != list(range(1, len(ranks) + 1)):
            raise ValueError(f"document ranks must be contiguous from 1, got {ranks}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "query": {"text": self.query.text, "k": self.query.k},
            "documents": [d.to_dict() for d in self.documents],
            "backend_id": self.backend_id,
            "fetched_at": self.fetched_at,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Observation":
        q = data["query"]
        return cls(
            SearchQuery(q["text"], int(q["k"])),
            tuple(Document(d["title"], d["snippet"], d["url"], int(d["rank"])) for d in data["documents"]),
            data["backend_id"],
            float(data.get("fetched_at", 0.0)),
        )


@dataclass(frozen=True)
class TextualizedObservation:
    text: str
    include_titles: bool = False


def textualize(obs: Observation, include_titles: bool = False) -> TextualizedObservation:
    """Join snippets (optionally each preceded by its title) with newlines in rank order."""
    parts: list[str] = []
    for doc in obs.documents:
        if include_titles:
            parts.append(doc.title)
        parts.append(doc.snippet)
    return TextualizedObservation("\n".join(parts), include_titles)


class SearchBackend(Protocol):
    backend_id: str

    def search(self, query: SearchQuery) -> Observation: ...


# -- local backend -----------------------------------------------------------


@dataclass(frozen=True)
class LocalDocument:
    doc_id: str
    title: str
    body: str
    url: str


class LocalCorpus:
    """Immutable in-memory corpus with a term-count index over document bodies."""

    def __init__(self, documents: Iterable[LocalDocument]):
        self.documents: tuple[LocalDocument, ...] = tuple(documents)
        seen: set[str] = set()
        for doc in self.documents:
            if doc.doc_id in seen:
                raise ValueError(f"duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)
        bodies = [normalize(d.body) for d in self.documents]
        self.stats = CorpusStats.fit(bodies)
        self.term_counts: tuple[Counter[str], ...] = tuple(Counter(b.tokens) for b in bodies)

    def __len__(self) -> int:
        return len(self.documents)

    @classmethod
    def from_jsonl(cls, path: str | os.PathLike[str]) -> "LocalCorpus":
        docs = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                    docs.append(LocalDocument(str(row["doc_id"]), row["title"], row["body"], row["url"]))
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad corpus line ({exc})") from exc
        return cls(docs)

    def to_jsonl(self, path: str | os.PathLike[str]) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for d in self.documents:
                row = {"doc_id": d.doc_id, "title": d.title, "body": d.body, "url": d.url}
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def rank_local(corpus: LocalCorpus, query: SearchQuery, backend_id: str = "local") -> Observation:
    """Rank corpus documents by TF-IDF cosine to the query.

    Zero-score documents are excluded; ties go to the smaller doc_id.
    """
    if len(corpus) == 0:
        raise EmptyCorpus("local corpus has no documents")
    q_counts = Counter(normalize(query.text).tokens)
    scored = []
    for doc, counts in zip(corpus.documents, corpus.term_counts):
        score = weighted_cosine(q_counts, counts, corpus.stats)
        if score > 0.0:
            scored.append((-score, doc.doc_id, doc))
    scored.sort(key=lambda t: (t[0], t[1]))
    docs = tuple(
        Document(doc.title, doc.body, doc.url, rank)
        for rank, (_, _, doc) in enumerate(scored[: query.k], 1)
    )
    # no fetch happens locally; a fixed timestamp keeps observations byte-identical
    return Observation(query, docs, backend_id, 0.0)


class LocalSearchBackend:
    def __init__(self, corpus: LocalCorpus, backend_id: str = "local"):
        self.corpus = corpus
        self.backend_id = backend_id

    def search(self, query: SearchQuery) -> Observation:
        return rank_local(self.corpus, query, self.backend_id)


# -- live backend --------------------------------------------------------------


class ResponseCache:
    """One JSON file per (backend_id, query text, k), written via atomic rename."""

    def __init__(self, directory: str | os.PathLike[str]):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, backend_id: str, text: str, k: int) -> Path:
        key = json.dumps([backend_id, text, k], ensure_ascii=False, separators=(",", ":"))
        return self.directory / (hashlib.sha256(key.encode("utf-8")).hexdigest() + ".json")

    def get(self, backend_id: str, text: str, k: int) -> Any | None:
        path = self._path(backend_id, text, k)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except json.JSONDecodeError:
            log.warning("ignoring corrupt cache entry %s", path)
            return None

    def put(self, backend_id: str, text: str, k: int, payload: Any) -> None:
        atomic_write_text(self._path(backend_id, text, k), json.dumps(payload, ensure_ascii=False))


def atomic_write_text(path: str | os.PathLike[str], text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def parse_organic(payload: Any, k: int) -> tuple[list[tuple[str, str, str]], int]:
    """Pull (title, snippet, url) triples out of a Serper response.

    Returns the valid items in position order and the number of dropped ones.
    """
    organic = payload.get("organic", []) if isinstance(payload, dict) else []
    if not isinstance(organic, list):
        return [], 1
    rows = []
    dropped = 0
    for idx, item in enumerate(organic):
        if not isinstance(item, dict):
            dropped += 1
            continue
        url = item.get("link")
        if not isinstance(url, str) or not url.strip():
            dropped += 1
            continue
        pos = item.get("position")
        pos = pos if isinstance(pos, (int, float)) and not isinstance(pos, bool) else float("inf")
        title = item.get("title") if isinstance(item.get("title"), str) else ""
        snippet = item.get("snippet") if isinstance(item.get("snippet"), str) else ""
        rows.append((pos, idx, (title, snippet, url)))
    rows.sort(key=lambda r: (r[0], r[1]))
    return [r[2] for r in rows[:k]], dropped


class SerperBackend:
    """HTTPS client for a Serper-compatible search endpoint."""

    backend_id = "serper"

    def __init__(
        self,
        api_key: str,
        endpoint: str = SERPER_ENDPOINT,
        *,
        max_retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 30.0,
        cache_dir: str | os.PathLike[str] | None = None,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not api_key:
            raise ConfigError("Serper API key is empty")
        self.api_key = api_key
        self.endpoint = endpoint
        self.max_retries = max_retries
        self.backoff = backoff
        self.cache = ResponseCache(cache_dir) if cache_dir else None
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep
        self._lock = threading.Lock()
        self.dropped_items = 0

    @classmethod
    def from_env(cls, **kwargs: Any) -> "SerperBackend":
        key = os.environ.get("SERPER_API_KEY", "")
        if not key:
            raise ConfigError(
                "SERPER_API_KEY is not set; export it for live search or pass --local-corpus to run offline"
            )
        return cls(key, **kwargs)

    def _post(self, text: str, k: int) -> Any:
        attempt = 0
        while True:
            try:
                resp = self._client.post(
                    self.endpoint,
                    json={"q": text, "num": k},
                    headers={"X-API-KEY": self.api_key, "Content-Type": "application/json"},
                )
            except httpx.TransportError as exc:
                err: Exception = NetworkError(f"search transport error: {exc}")
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"search endpoint rejected credentials (HTTP {resp.status_code})")
                if resp.status_code == 429 or resp.status_code >= 500:
                    err = NetworkError(f"search endpoint returned HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise NetworkError(f"search request failed with HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        err = NetworkError(f"search endpoint returned invalid JSON: {exc}")
            if attempt >= self.max_retries:
                raise err
            self._sleep(self.backoff * (2**attempt))
            attempt += 1

    def search(self, query: SearchQuery) -> Observation:
        payload = self.cache.get(self.backend_id, query.text, query.k) if self.cache else None
        if payload is None:
            payload = self._post(query.text, query.k)
            if self.cache:
                self.cache.put(self.backend_id, query.text, query.k, payload)
        rows, dropped = parse_organic(payload, query.k)
        if dropped:
            with self._lock:
                self.dropped_items += dropped
            log.warning("dropped %d malformed search result(s) for %r", dropped, query.text)
        docs = tuple(Document(t, s, u, rank) for rank, (t, s, u) in enumerate(rows, 1))
        return Observation(query, docs, self.backend_id, time.time())
