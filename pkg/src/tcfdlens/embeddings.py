"""Embedding vectors and backends.

Two backends ship by default: a deterministic hash-based one used for tests
and offline runs, and an HTTP adapter for OpenAI-style embedding endpoints.
Both are interchangeable behind the same embed() contract.
"""

from __future__ import annotations

import hashlib
import math
import os
import struct
from dataclasses import dataclass
from typing import Protocol, Sequence

import requests

from .errors import BackendUnavailable, DimensionMismatch, EmptyBatch, ZeroVector


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)

    def __post_init__(self):
        for v in self.values:
            if not math.isfinite(v):
                raise ValueError(f"embedding component is not finite: {v}")


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dim != b.dim:
        raise DimensionMismatch(f"vector dims differ: {a.dim} vs {b.dim}")
    dot = 0.0
    norm_a = 0.0
    norm_b = 0.0
    for x, y in zip(a.values, b.values):
        dot += x * y
        norm_a += x * x
        norm_b += y * y
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    return dot / math.sqrt(norm_a * norm_b)


class EmbeddingBackend(Protocol):
    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


def _validate_batch(texts: Sequence[str]) -> None:
    if len(texts) == 0:
        raise EmptyBatch("embed() requires at least one text")


class HashEmbeddingBackend:
    """Deterministic offline embeddings.

    Identical texts always map to identical unit vectors. ``overrides`` pins
    chosen texts to chosen vectors, which lets tests construct indexes with
    exact similarity structure (orthogonal vectors, ties, rankings).
    """

    def __init__(self, dim: int = 64, overrides: dict[str, Sequence[float]] | None = None):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._overrides = {k: tuple(float(x) for x in v) for k, v in (overrides or {}).items()}
        for text, vec in self._overrides.items():
            if len(vec) != dim:
                raise DimensionMismatch(
                    f"override for {text!r} has dim {len(vec)}, backend dim is {dim}"
                )

    def _vector_for(self, text: str) -> EmbeddingVector:
        if text in self._overrides:
            return EmbeddingVector(self._overrides[text])
        components = []
        for i in range(self.dim):
            digest = hashlib.sha256(f"{text}\x00{i}".encode("utf-8")).digest()
            (word,) = struct.unpack(">Q", digest[:8])
            components.append(word / 2**63 - 1.0)  # spread into [-1, 1)
        norm = math.sqrt(sum(c * c for c in components))
        if norm == 0.0:  # astronomically unlikely, but keep the contract total
            components[0] = 1.0
            norm = 1.0
        return EmbeddingVector(tuple(c / norm for c in components))

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        _validate_batch(texts)
        return [self._vector_for(t) for t in texts]


class HttpEmbeddingBackend:
    """Adapter for OpenAI-style /embeddings endpoints."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        api_key_env: str = "TCFDLENS_EMBED_API_KEY",
        timeout: float = 30.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self._api_key = api_key if api_key is not None else os.environ.get(api_key_env)
        self.timeout = timeout

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        _validate_batch(texts)
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        try:
            resp = requests.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": list(texts)},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"embedding endpoint unreachable: {exc}", stage="embed")
        if resp.status_code != 200:
            raise BackendUnavailable(
                f"embedding endpoint returned {resp.status_code}: {resp.text[:200]}",
                stage="embed",
            )
        try:
            rows = resp.json()["data"]
            vectors = [EmbeddingVector(tuple(float(x) for x in row["embedding"])) for row in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendUnavailable(f"embedding response malformed: {exc}", stage="embed")
        if len(vectors) != len(texts):
            raise BackendUnavailable(
                f"embedding endpoint returned {len(vectors)} vectors for {len(texts)} texts",
                stage="embed",
            )
        dims = {v.dim for v in vectors}
        if len(dims) > 1:
            raise DimensionMismatch(f"embedding response mixes dimensions: {sorted(dims)}")
        return vectors
