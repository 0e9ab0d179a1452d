"""Embedding providers producing fixed-dimension unit-norm sentence vectors.

Two providers share one contract: a remote JSON service (any model server
speaking the protocol below) and a deterministic feature-hashing provider
that lets the whole pipeline run with no model at all. Every vector leaving
this module is L2-normalized and finite; downstream cosine is then a plain
dot product.

Remote protocol: ``POST {endpoint}/embed`` with ``{"texts": [...]}`` returns
``{"vectors": [[...], ...], "dimension": d, "model": "<string>"}``. The model
string is recorded in index manifests for provenance.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from functools import lru_cache
from hashlib import blake2b
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import httpx
import numpy as np

from .corpus import SentenceRecord
from .errors import ConfigError, DimensionMismatch, ProviderUnavailable, ZeroVector

DEFAULT_DIMENSION = 384


@dataclass(frozen=True)
class EmbeddingVector:
    sentence_id: str
    values: np.ndarray  # float32, unit norm

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float32))


@dataclass(frozen=True)
class EmbeddingProviderConfig:
    provider_kind: str = "hash_test"  # hash_test | remote_service
    endpoint: str = ""
    dimension: int = DEFAULT_DIMENSION
    batch_size: int = 64
    timeout: float = 30.0
    retries: int = 2
    retry_backoff: float = 0.2

    def __post_init__(self):
        if self.dimension <= 0:
            raise ConfigError("dimension must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")


def normalize(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Scale to unit Euclidean norm, preserving direction."""
    arr = np.asarray(values, dtype=np.float32)
    norm = float(np.linalg.norm(arr.astype(np.float64)))
    if norm == 0.0 or not np.isfinite(norm):
        raise ZeroVector("cannot normalize a zero or non-finite vector")
    return (arr / np.float32(norm)).astype(np.float32)


_NON_ALNUM = re.compile(r"[^a-z0-9\s]+")


def _canonical_text(text: str) -> str:
    return " ".join(_NON_ALNUM.sub(" ", text.lower()).split())


@lru_cache(maxsize=1 << 20)
def _feature_slot(feature: str, dimension: int) -> tuple[int, float]:
    h = int.from_bytes(blake2b(feature.encode("utf-8"), digest_size=8).digest(), "little")
    return h % dimension, 1.0 if (h >> 63) & 1 else -1.0


def hash_embed(text: str, dimension: int = DEFAULT_DIMENSION) -> np.ndarray:
    """Signed feature hashing of character 3-grams and word unigrams.

    Pure function of (text, dimension). The text is lowercased and stripped
    of punctuation first, so small OCR corruptions of the same passage still
    land on mostly shared buckets and score high cosine, while unrelated
    strings decorrelate. Counted (multiset) features; unit-norm output.
    """
    canon = _canonical_text(text)
    if not canon:
        raise ZeroVector(f"text has no hashable content: {text!r}")
    buckets: list[int] = []
    signs: list[float] = []
    for i in range(len(canon) - 2):
        b, s = _feature_slot("3:" + canon[i : i + 3], dimension)
        buckets.append(b)
        signs.append(s)
    for word in canon.split():
        b, s = _feature_slot("w:" + word, dimension)
        buckets.append(b)
        signs.append(s)
    vec = np.zeros(dimension, dtype=np.float32)
    np.add.at(vec, buckets, signs)
    return normalize(vec)


class EmbeddingProvider(Protocol):
    dimension: int

    @property
    def model_id(self) -> str: ...

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray: ...


class HashProvider:
    """Deterministic test provider; no model, no network."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        self.dimension = dimension

    @property
    def model_id(self) -> str:
        return f"feature-hash-v1-d{self.dimension}"

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([hash_embed(t, self.dimension) for t in texts])


class RemoteProvider:
    """Client for a remote embedding service speaking the JSON protocol."""

    def __init__(
        self,
        endpoint: str,
        dimension: int = DEFAULT_DIMENSION,
        timeout: float = 30.0,
        retries: int = 2,
        retry_backoff: float = 0.2,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.dimension = dimension
        self.retries = retries
        self.retry_backoff = retry_backoff
        self._model: str | None = None
        self._client = httpx.Client(timeout=timeout, transport=transport)

    @property
    def model_id(self) -> str:
        return self._model or f"remote:{self.endpoint}"

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        url = f"{self.endpoint}/embed"
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                response = self._client.post(url, json={"texts": list(texts)})
                if response.status_code >= 500:
                    raise ProviderUnavailable(
                        f"{url} returned {response.status_code}"
                    )
                response.raise_for_status()
                payload = response.json()
                break
            except (httpx.TransportError, ProviderUnavailable) as exc:
                last_error = exc
                if attempt < self.retries:
                    time.sleep(self.retry_backoff * (attempt + 1))
            except httpx.HTTPStatusError as exc:
                raise ProviderUnavailable(f"{url} rejected the request: {exc}") from exc
        else:
            raise ProviderUnavailable(
                f"{url} unreachable after {self.retries + 1} attempts: {last_error}"
            )
        reported = int(payload.get("dimension", self.dimension))
        if reported != self.dimension:
            raise DimensionMismatch(
                f"provider dimension {reported}, expected {self.dimension}"
            )
        self._model = str(payload.get("model", self.model_id))
        matrix = np.asarray(payload["vectors"], dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape != (len(texts), self.dimension):
            raise DimensionMismatch(
                f"provider returned shape {matrix.shape}, "
                f"expected {(len(texts), self.dimension)}"
            )
        return matrix

    def close(self) -> None:
        self._client.close()


def build_provider(
    config: EmbeddingProviderConfig, transport: httpx.BaseTransport | None = None
) -> EmbeddingProvider:
    if config.provider_kind == "hash_test":
        return HashProvider(config.dimension)
    if config.provider_kind == "remote_service":
        if not config.endpoint:
            raise ConfigError("remote_service provider needs an endpoint")
        return RemoteProvider(
            config.endpoint,
            dimension=config.dimension,
            timeout=config.timeout,
            retries=config.retries,
            retry_backoff=config.retry_backoff,
            transport=transport,
        )
    raise ConfigError(f"unknown provider kind {config.provider_kind!r}")


def embed_batch(
    sentences: Sequence[SentenceRecord],
    config: EmbeddingProviderConfig,
    provider: EmbeddingProvider | None = None,
) -> list[EmbeddingVector]:
    """Embed sentence records in provider-sized batches, order preserved.

    Every output vector is checked: declared dimension, finite components,
    then normalized to unit length. Identical text under the same provider
    yields bitwise-identical vectors.
    """
    if provider is None:
        provider = build_provider(config)
    vectors: list[EmbeddingVector] = []
    for lo in range(0, len(sentences), config.batch_size):
        chunk = sentences[lo : lo + config.batch_size]
        matrix = np.asarray(provider.embed_texts([r.text for r in chunk]), dtype=np.float32)
        if matrix.shape != (len(chunk), config.dimension):
            raise DimensionMismatch(
                f"provider returned shape {matrix.shape}, "
                f"expected {(len(chunk), config.dimension)}"
            )
        if not np.all(np.isfinite(matrix)):
            raise ProviderUnavailable("provider returned non-finite components")
        norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
        if np.any(norms == 0.0):
            raise ZeroVector("provider returned a zero vector")
        matrix = (matrix / norms[:, None].astype(np.float32)).astype(np.float32)
        vectors.extend(
            EmbeddingVector(rec.sentence_id, row) for rec, row in zip(chunk, matrix)
        )
    return vectors


def save_vectors(
    path: Path | str, vectors: Iterable[EmbeddingVector], model_id: str
) -> None:
    """Persist an embedded corpus as an intermediate artifact."""
    vectors = list(vectors)
    ids = np.array([v.sentence_id for v in vectors])
    matrix = np.stack([v.values for v in vectors]) if vectors else np.zeros((0, 0), np.float32)
    np.savez(path, ids=ids, matrix=matrix, model=np.array([model_id]))


def load_vectors(path: Path | str) -> tuple[list[str], np.ndarray, str]:
    with np.load(path, allow_pickle=False) as data:
        ids = [str(x) for x in data["ids"]]
        matrix = np.asarray(data["matrix"], dtype=np.float32)
        model_id = str(data["model"][0])
    return ids, matrix, model_id
