"""Static per-report vector index: build, query, persist.

The index maps 0-based source numbers to embedding vectors and keeps the
chunks themselves so query results can cite text and page numbers. The file
format is a small binary container: header JSON, raw float64 vectors, chunk
JSON, and a trailing sha256 over everything before it.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingBackend, EmbeddingVector
from .errors import CorruptIndex, DimensionMismatch, EmptyBatch, IoFailure, ZeroVector
from .ingestion import DocumentChunk

_MAGIC = b"TLIX0001"


@dataclass
class VectorIndex:
    doc_id: str
    dim: int
    vectors: dict[int, EmbeddingVector] = field(default_factory=dict)
    chunks: dict[int, DocumentChunk] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.vectors)

    def add(self, chunk: DocumentChunk, vector: EmbeddingVector) -> None:
        if vector.dim != self.dim:
            raise DimensionMismatch(
                f"vector dim {vector.dim} does not match index dim {self.dim}"
            )
        self.vectors[chunk.source_number] = vector
        self.chunks[chunk.source_number] = chunk

    def source_numbers(self) -> list[int]:
        return sorted(self.vectors)


@dataclass(frozen=True)
class ScoredChunk:
    chunk: DocumentChunk
    score: float

    @property
    def source_number(self) -> int:
        return self.chunk.source_number


def build_index(doc_id: str, chunks: Sequence[DocumentChunk], backend: EmbeddingBackend) -> VectorIndex:
    if not chunks:
        raise EmptyBatch("cannot build an index from zero chunks")
    vectors = backend.embed([c.text for c in chunks])
    dims = {v.dim for v in vectors}
    if len(dims) != 1:
        raise DimensionMismatch(f"backend returned mixed dimensions: {sorted(dims)}")
    index = VectorIndex(doc_id=doc_id, dim=dims.pop())
    for chunk, vector in zip(chunks, vectors):
        index.add(chunk, vector)
    return index


def top_k(index: VectorIndex, query: EmbeddingVector, k: int) -> list[ScoredChunk]:
    """The k most cosine-similar chunks, best first, ties by source number."""
    if k <= 0:
        return []
    if query.dim != index.dim:
        raise DimensionMismatch(f"query dim {query.dim} does not match index dim {index.dim}")
    sources = index.source_numbers()
    if not sources:
        return []

    matrix = np.array([index.vectors[s].values for s in sources], dtype=np.float64)
    q = np.array(query.values, dtype=np.float64)
    q_norm = float(np.linalg.norm(q))
    if q_norm == 0.0:
        raise ZeroVector("query embedding is a zero vector")
    # Per-row reductions rather than a BLAS matvec: gemv kernels can return
    # last-ulp-different dot products for bit-identical rows depending on row
    # position, which would break the tie-break-by-source contract below.
    row_norms = np.sqrt((matrix * matrix).sum(axis=1))
    if np.any(row_norms == 0.0):
        raise ZeroVector("index contains a zero vector")
    scores = (matrix * q).sum(axis=1) / (row_norms * q_norm)

    order = sorted(range(len(sources)), key=lambda i: (-scores[i], sources[i]))
    return [ScoredChunk(index.chunks[sources[i]], float(scores[i])) for i in order[:k]]


def save_index(index: VectorIndex, path: str | Path) -> None:
    """Write the index with a whole-file checksum; the write is atomic."""
    sources = index.source_numbers()
    header = json.dumps(
        {"doc_id": index.doc_id, "dim": index.dim, "count": len(sources), "sources": sources},
        ensure_ascii=False,
        sort_keys=True,
    ).encode("utf-8")

    vec_bytes = bytearray()
    for s in sources:
        vec_bytes += struct.pack(f"<{index.dim}d", *index.vectors[s].values)

    chunk_bytes = json.dumps(
        [index.chunks[s].to_json_obj() for s in sources], ensure_ascii=False, sort_keys=True
    ).encode("utf-8")

    body = (
        _MAGIC
        + struct.pack("<I", len(header))
        + header
        + struct.pack("<Q", len(vec_bytes))
        + bytes(vec_bytes)
        + struct.pack("<Q", len(chunk_bytes))
        + chunk_bytes
    )
    digest = hashlib.sha256(body).digest()

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(body + digest)
        tmp.replace(path)
    except OSError as exc:
        raise IoFailure(f"cannot write index file {path}: {exc}")


def load_index(path: str | Path) -> VectorIndex:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read index file {path}: {exc}")

    if len(blob) < len(_MAGIC) + 32:
        raise CorruptIndex(f"index file {path} is truncated")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptIndex(f"index file {path} failed its checksum")
    if not body.startswith(_MAGIC):
        raise CorruptIndex(f"index file {path} has a bad magic header")

    try:
        offset = len(_MAGIC)
        (header_len,) = struct.unpack_from("<I", body, offset)
        offset += 4
        header = json.loads(body[offset : offset + header_len].decode("utf-8"))
        offset += header_len
        (vec_len,) = struct.unpack_from("<Q", body, offset)
        offset += 8
        vec_bytes = body[offset : offset + vec_len]
        offset += vec_len
        (chunk_len,) = struct.unpack_from("<Q", body, offset)
        offset += 8
        chunk_objs = json.loads(body[offset : offset + chunk_len].decode("utf-8"))

        dim = header["dim"]
        sources = header["sources"]
        if vec_len != len(sources) * dim * 8:
            raise CorruptIndex(f"index file {path} vector section has the wrong size")
        index = VectorIndex(doc_id=header["doc_id"], dim=dim)
        for i, (source, obj) in enumerate(zip(sources, chunk_objs)):
            values = struct.unpack_from(f"<{dim}d", vec_bytes, i * dim * 8)
            chunk = DocumentChunk.from_json_obj(obj)
            if chunk.source_number != source:
                raise CorruptIndex(f"index file {path} chunk order disagrees with header")
            index.add(chunk, EmbeddingVector(tuple(values)))
        return index
    except CorruptIndex:
        raise
    except (KeyError, ValueError, struct.error, json.JSONDecodeError) as exc:
        raise CorruptIndex(f"index file {path} cannot be decoded: {exc}")
