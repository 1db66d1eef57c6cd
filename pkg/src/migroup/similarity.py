"""Pluggable semantic similarity scorers over output texts.

Every scorer maps a pair of texts to [0, 1], with 1 meaning identical
semantics after normalization and 0 complete dissimilarity. Non-embedding
kinds are pure functions of their normalized inputs; the embedding kind
talks to an embeddings endpoint and caches vectors per text.
"""

import json
import math
import re
import threading
import time
import unicodedata
from collections import Counter
from dataclasses import dataclass

import requests

from .errors import InputError, ProtocolError, TransportError

KINDS = ("exact_match", "token_f1", "normalized_edit", "embedding_cosine")


@dataclass(frozen=True)
class SimilarityFunction:
    similarity_id: str
    kind: str
    parameters: tuple[tuple[str, object], ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown similarity kind {self.kind!r}")

    def param(self, key: str, default=None):
        for k, v in self.parameters:
            if k == key:
                return v
        return default

    @classmethod
    def make(cls, similarity_id: str, kind: str, **params) -> "SimilarityFunction":
        return cls(similarity_id, kind, tuple(sorted(params.items())))


def _normalize(fn: SimilarityFunction, text: str) -> str:
    pattern = fn.param("extract_pattern")
    if pattern:
        m = re.search(pattern, text)
        if m:
            text = m.group(1) if m.groups() else m.group(0)
    if fn.param("strip", True):
        text = text.strip()
    if fn.param("case_fold", True):
        text = text.casefold()
    return text


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Split on Unicode whitespace, strip punctuation at token edges, drop empties."""
    out = []
    for raw in text.split():
        start, end = 0, len(raw)
        while start < end and _is_punct(raw[start]):
            start += 1
        while end > start and _is_punct(raw[end - 1]):
            end -= 1
        if end > start:
            out.append(raw[start:end])
    return out


def _token_f1(a: str, b: str) -> float:
    ta, tb = tokenize(a), tokenize(b)
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    overlap = sum((Counter(ta) & Counter(tb)).values())
    return 2.0 * overlap / (len(ta) + len(tb))


def _levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _normalized_edit(a: str, b: str) -> float:
    if not a and not b:
        return 1.0
    return 1.0 - _levenshtein(a, b) / max(len(a), len(b))


class EmbeddingClient:
    """Minimal embeddings-endpoint client with retries and an in-memory vector cache.

    Wire shape: POST {"model": ..., "input": [texts]} ->
    {"data": [{"index": i, "embedding": [...]}, ...]}.
    Access to the transport is serialized; cached lookups are lock-free reads.
    """

    def __init__(
        self,
        endpoint_url: str,
        model_id: str,
        *,
        timeout: float = 30.0,
        max_retries: int = 3,
        batch_size: int = 64,
        api_key: str | None = None,
        session: requests.Session | None = None,
        backoff_base: float = 0.5,
        sleep=time.sleep,
    ):
        self.endpoint_url = endpoint_url
        self.model_id = model_id
        self.timeout = timeout
        self.max_retries = max_retries
        self.batch_size = batch_size
        self.api_key = api_key
        self._session = session or requests.Session()
        self._backoff_base = backoff_base
        self._sleep = sleep
        self._cache: dict[str, tuple[float, ...]] = {}
        self._lock = threading.Lock()

    def embed(self, texts: list[str]) -> list[tuple[float, ...]]:
        missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        for start in range(0, len(missing), self.batch_size):
            chunk = missing[start : start + self.batch_size]
            vectors = self._fetch(chunk)
            with self._lock:
                self._cache.update(zip(chunk, vectors))
        return [self._cache[t] for t in texts]

    def _fetch(self, texts: list[str]) -> list[tuple[float, ...]]:
        if not texts:
            return []
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {"model": self.model_id, "input": texts}
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._session.post(
                    self.endpoint_url, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last = exc
                if attempt < self.max_retries:
                    self._sleep(self._backoff_base * 2**attempt)
                    continue
                raise TransportError(f"embeddings endpoint unreachable: {exc}") from exc
            if resp.status_code in (429,) or resp.status_code >= 500:
                last = TransportError(
                    f"embeddings endpoint returned {resp.status_code}",
                    status=resp.status_code,
                    body=resp.text[:2000],
                )
                if attempt < self.max_retries:
                    self._sleep(self._backoff_base * 2**attempt)
                    continue
                raise last
            if resp.status_code != 200:
                raise TransportError(
                    f"embeddings endpoint returned {resp.status_code}",
                    status=resp.status_code,
                    body=resp.text[:2000],
                )
            return self._parse(resp.text, expected=len(texts))
        raise TransportError(f"embeddings request failed: {last}")  # pragma: no cover

    @staticmethod
    def _parse(body: str, expected: int) -> list[tuple[float, ...]]:
        try:
            obj = json.loads(body)
            data = obj["data"]
            rows = sorted(data, key=lambda d: d["index"])
            vectors = [tuple(float(x) for x in row["embedding"]) for row in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed embeddings response: {exc}", raw_body=body[:2000]) from exc
        if len(vectors) != expected:
            raise ProtocolError(
                f"embeddings response has {len(vectors)} vectors, expected {expected}",
                raw_body=body[:2000],
            )
        if vectors and len({len(v) for v in vectors}) != 1:
            raise ProtocolError("embeddings response vectors have mixed dimensions", raw_body=body[:2000])
        return vectors


def _cosine(u: tuple[float, ...], v: tuple[float, ...]) -> float:
    dot = math.fsum(a * b for a, b in zip(u, v))
    nu = math.sqrt(math.fsum(a * a for a in u))
    nv = math.sqrt(math.fsum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        return 1.0 if nu == nv else 0.0
    return dot / (nu * nv)


class SimilarityRegistry:
    """Registry addressing scorers by similarity_id."""

    def __init__(self):
        self._functions: dict[str, SimilarityFunction] = {}
        self._embedding_clients: dict[str, EmbeddingClient] = {}

    def register(self, fn: SimilarityFunction, embedding_client: EmbeddingClient | None = None) -> None:
        if fn.kind == "embedding_cosine" and embedding_client is None:
            raise InputError(f"embedding_cosine scorer {fn.similarity_id!r} needs an embedding client")
        self._functions[fn.similarity_id] = fn
        if embedding_client is not None:
            self._embedding_clients[fn.similarity_id] = embedding_client

    def get(self, similarity_id: str) -> SimilarityFunction:
        try:
            return self._functions[similarity_id]
        except KeyError:
            raise InputError(f"similarity function {similarity_id!r} is not registered") from None

    def client_for(self, fn: SimilarityFunction) -> EmbeddingClient:
        try:
            return self._embedding_clients[fn.similarity_id]
        except KeyError:
            raise InputError(f"no embedding client registered for {fn.similarity_id!r}") from None

    def ids(self) -> list[str]:
        return sorted(self._functions)


DEFAULT_REGISTRY = SimilarityRegistry()
for _id, _kind in (
    ("exact_match", "exact_match"),
    ("token_f1", "token_f1"),
    ("normalized_edit", "normalized_edit"),
):
    DEFAULT_REGISTRY.register(SimilarityFunction.make(_id, _kind))


def default_similarity_id(has_options: bool) -> str:
    """Closed-form answers compare by exact match, free-form by token F1."""
    return "exact_match" if has_options else "token_f1"


def score(
    fn: SimilarityFunction,
    a: str,
    b: str,
    *,
    registry: SimilarityRegistry = DEFAULT_REGISTRY,
) -> float:
    return batch_score(fn, [(a, b)], registry=registry)[0]


def batch_score(
    fn: SimilarityFunction,
    pairs: list[tuple[str, str]],
    *,
    registry: SimilarityRegistry = DEFAULT_REGISTRY,
) -> list[float]:
    """Score each pair; order-preserving, all-or-nothing on failure."""
    if not pairs:
        return []
    normalized = [(_normalize(fn, a), _normalize(fn, b)) for a, b in pairs]
    if fn.kind == "exact_match":
        return [1.0 if a == b else 0.0 for a, b in normalized]
    if fn.kind == "token_f1":
        return [_token_f1(a, b) for a, b in normalized]
    if fn.kind == "normalized_edit":
        return [_normalized_edit(a, b) for a, b in normalized]
    if fn.kind == "embedding_cosine":
        client = registry.client_for(fn)
        texts = [t for pair in normalized for t in pair]
        vectors = client.embed(texts)
        out = []
        for i in range(0, len(vectors), 2):
            # negative cosine clamps to 0: dissimilar stays "completely dissimilar"
            c = _cosine(vectors[i], vectors[i + 1])
            out.append(min(max(c, 0.0), 1.0))
        return out
    raise InputError(f"unknown similarity kind {fn.kind!r}")  # pragma: no cover
