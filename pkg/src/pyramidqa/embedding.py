"""Text embedding backends, cosine similarity, and triple ranking.

Two embedders are provided behind one interface: a remote HTTP service
(OpenAI-compatible request/response shape) and a deterministic hashed
bag-of-words embedder for offline runs and tests. An append-only file cache
can wrap either backend, keyed on (backend id, exact text).
"""

from __future__ import annotations

import abc
import hashlib
import json
import logging
import re
import threading
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .kg import KnowledgeGraph, Subgraph, Triple, verbalize

logger = logging.getLogger(__name__)

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


class EmbeddingError(Exception):
    """Raised when an embedding backend fails."""


def cosine_similarity(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    """Cosine of the angle between two vectors: dot(u, v) / (|u| * |v|).

    Raises ValueError on length mismatch or zero-norm input; a zero vector
    carries no direction, and returning 0 or NaN would silently conflate
    "unrelated" with "empty text".
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or v.ndim != 1:
        raise ValueError("cosine_similarity expects 1-d vectors")
    if u.shape[0] != v.shape[0]:
        raise ValueError(f"vector length mismatch: {u.shape[0]} != {v.shape[0]}")
    if u.shape[0] == 0:
        raise ValueError("cosine_similarity expects non-empty vectors")
    norm_u = float(np.linalg.norm(u))
    norm_v = float(np.linalg.norm(v))
    if norm_u == 0.0 or norm_v == 0.0:
        raise ValueError("cosine similarity is undefined for a zero-norm vector")
    return float(np.dot(u, v) / (norm_u * norm_v))


class Embedder(abc.ABC):
    """Embedding backend contract: same text, same vector, fixed dimension."""

    @property
    @abc.abstractmethod
    def backend_id(self) -> str:
        """Stable identifier used for cache keys."""

    @abc.abstractmethod
    def embed(self, text: str) -> np.ndarray:
        """Embed one string into a float64 vector."""

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


class HashedBowEmbedder(Embedder):
    """Deterministic bag-of-words embedder: token counts hashed into buckets.

    Text is lowercased and split on non-alphanumeric characters; each token
    is hashed (md5, platform independent) into one of `dimension` buckets
    and counted. Empty or whitespace-only text embeds to the zero vector,
    which downstream cosine rejects explicitly.
    """

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = dimension

    @property
    def backend_id(self) -> str:
        return f"hashed_bow:{self.dimension}"

    def _bucket(self, token: str) -> int:
        digest = hashlib.md5(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dimension

    def embed(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dimension, dtype=np.float64)
        for token in _TOKEN_SPLIT.split(text.lower()):
            if token:
                vector[self._bucket(token)] += 1.0
        return vector


class RemoteEmbedder(Embedder):
    """HTTP embedding service client (OpenAI-compatible wire shape).

    The request posts `{"model": ..., "input": [texts...]}` and the response
    is expected to carry one vector per input, in order, under
    `data[i].embedding`.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        if not endpoint:
            raise ValueError("remote embedder requires an endpoint URL")
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self._session = session or requests.Session()

    @property
    def backend_id(self) -> str:
        return f"remote:{self.model}"

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            return []
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self._session.post(
                self.endpoint,
                json={"model": self.model, "input": list(texts)},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise EmbeddingError(f"embedding request failed: {exc}") from exc
        if response.status_code != 200:
            raise EmbeddingError(
                f"embedding service returned HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            data = response.json()["data"]
            vectors = [np.asarray(item["embedding"], dtype=np.float64) for item in data]
        except (KeyError, TypeError, ValueError) as exc:
            raise EmbeddingError(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(texts):
            raise EmbeddingError(
                f"embedding service returned {len(vectors)} vectors for {len(texts)} inputs"
            )
        return vectors


class EmbeddingCache:
    """Append-only (backend id, text) -> vector cache with hit/miss counters.

    When constructed with a path, existing records are loaded eagerly and
    every new entry is appended as one JSON line, so vectors survive across
    runs bit-identically (JSON floats round-trip exactly).
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.hits = 0
        self.misses = 0
        self._entries: dict[tuple[str, str], np.ndarray] = {}
        self._lock = threading.Lock()
        if self.path and self.path.is_file():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    record = json.loads(line)
                    key = (record["backend"], record["text"])
                    self._entries[key] = np.asarray(record["vector"], dtype=np.float64)

    def get(self, backend_id: str, text: str) -> np.ndarray | None:
        with self._lock:
            vector = self._entries.get((backend_id, text))
            if vector is None:
                self.misses += 1
                return None
            self.hits += 1
            return vector

    def put(self, backend_id: str, text: str, vector: np.ndarray) -> None:
        record = {"backend": backend_id, "text": text, "vector": [float(x) for x in vector]}
        with self._lock:
            if (backend_id, text) in self._entries:
                return
            self._entries[(backend_id, text)] = np.asarray(record["vector"], dtype=np.float64)
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self._entries)


class CachingEmbedder(Embedder):
    """Wraps another embedder with an EmbeddingCache."""

    def __init__(self, inner: Embedder, cache: EmbeddingCache):
        self.inner = inner
        self.cache = cache

    @property
    def backend_id(self) -> str:
        return self.inner.backend_id

    def embed(self, text: str) -> np.ndarray:
        cached = self.cache.get(self.backend_id, text)
        if cached is not None:
            return cached
        vector = self.inner.embed(text)
        self.cache.put(self.backend_id, text, vector)
        return vector

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        results: dict[int, np.ndarray] = {}
        missing: list[tuple[int, str]] = []
        for i, text in enumerate(texts):
            cached = self.cache.get(self.backend_id, text)
            if cached is None:
                missing.append((i, text))
            else:
                results[i] = cached
        if missing:
            fresh = self.inner.embed_many([text for _, text in missing])
            for (i, text), vector in zip(missing, fresh):
                self.cache.put(self.backend_id, text, vector)
                results[i] = vector
        return [results[i] for i in range(len(texts))]


def rank_triples(
    query: str,
    subgraph: Subgraph,
    kg: KnowledgeGraph,
    embedder: Embedder,
    n: int,
) -> list[tuple[Triple, float]]:
    """Score each triple's verbalization against the query; return the top n.

    Order is deterministic: descending score, then subgraph insertion order,
    then lexicographic verbalization. Returns min(n, |subgraph|) pairs.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    triples = list(subgraph)
    if not triples:
        return []
    query_vector = embedder.embed(query)
    texts = [verbalize(kg, t) for t in triples]
    vectors = embedder.embed_many(texts)
    scored = [
        (triple, cosine_similarity(query_vector, vector), index, text)
        for index, (triple, vector, text) in enumerate(zip(triples, vectors, texts))
    ]
    scored.sort(key=lambda item: (-item[1], item[2], item[3]))
    return [(triple, score) for triple, score, _, _ in scored[:n]]
