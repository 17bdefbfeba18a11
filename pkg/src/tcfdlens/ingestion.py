"""Document loading and fixed-size chunking.

A document is an ordered list of pages. The canonical text used for chunking
and for the content-addressed doc_id is the page texts joined by a single
newline. Chunks are fixed-size character windows with a fixed overlap, so a
report can be re-indexed reproducibly and every chunk can be traced back to
a page.
"""

from __future__ import annotations

import hashlib
import json
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .errors import EmptyDocument, ExtractionFailure, InvalidChunkParams, UnsupportedFormat

PAGE_BREAK = "\x0c"

DEFAULT_CHUNK_SIZE = 500
DEFAULT_CHUNK_OVERLAP = 20

# A pdf extractor turns raw bytes into page texts. The default treats the
# payload as plain text so nothing here depends on a pdf library.
PdfExtractor = Callable[[bytes], list[str]]


@dataclass(frozen=True)
class Page:
    number: int  # 1-based
    text: str


@dataclass(frozen=True)
class Document:
    doc_id: str
    pages: tuple[Page, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def canonical_text(self) -> str:
        return "\n".join(p.text for p in self.pages)

    def page_start_offsets(self) -> list[int]:
        """Offset of each page's first character within the canonical text."""
        starts = []
        pos = 0
        for page in self.pages:
            starts.append(pos)
            pos += len(page.text) + 1  # +1 for the joining newline
        return starts

    def page_for_offset(self, offset: int) -> int:
        # The separator newline after a page still belongs to that page.
        starts = self.page_start_offsets()
        return bisect_right(starts, offset)

    def to_json(self) -> str:
        payload = {
            "doc_id": self.doc_id,
            "metadata": self.metadata,
            "pages": [{"page": p.number, "text": p.text} for p in self.pages],
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, raw: str) -> "Document":
        payload = json.loads(raw)
        pages = tuple(Page(p["page"], p["text"]) for p in payload["pages"])
        return cls(doc_id=payload["doc_id"], pages=pages, metadata=payload.get("metadata", {}))


@dataclass(frozen=True)
class DocumentChunk:
    source_number: int  # 0-based position in the chunk sequence
    text: str
    page_number: int    # 1-based page containing char_start
    char_start: int
    char_end: int       # exclusive

    def to_json_obj(self) -> dict:
        return {
            "source": self.source_number,
            "page": self.page_number,
            "start": self.char_start,
            "end": self.char_end,
            "text": self.text,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DocumentChunk":
        return cls(
            source_number=obj["source"],
            text=obj["text"],
            page_number=obj["page"],
            char_start=obj["start"],
            char_end=obj["end"],
        )


def _content_id(canonical_text: str) -> str:
    return hashlib.sha256(canonical_text.encode("utf-8")).hexdigest()[:16]


def default_pdf_extractor(raw: bytes) -> list[str]:
    """Plain-text pass-through: decode utf-8 and split on form feeds."""
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ExtractionFailure(f"payload is not utf-8 text: {exc}", stage="ingest")
    return text.split(PAGE_BREAK)


def load_document(
    raw: bytes | str,
    fmt: str = "plain_text",
    metadata: dict | None = None,
    pdf_extractor: PdfExtractor | None = None,
) -> Document:
    """Parse raw content into a Document with at least one page.

    Formats: ``plain_text`` (one page), ``page_delimited_text`` (pages split
    on form feed, U+000C), ``pdf`` (delegates to a pluggable extractor).
    """
    if isinstance(raw, bytes) and fmt != "pdf":
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ExtractionFailure(f"payload is not utf-8 text: {exc}", stage="ingest")

    if fmt == "plain_text":
        page_texts = [raw]
    elif fmt == "page_delimited_text":
        page_texts = raw.split(PAGE_BREAK)
    elif fmt == "pdf":
        extractor = pdf_extractor or default_pdf_extractor
        payload = raw if isinstance(raw, bytes) else raw.encode("utf-8")
        page_texts = extractor(payload)
        if not page_texts:
            raise ExtractionFailure("pdf extractor returned no pages", stage="ingest")
    else:
        raise UnsupportedFormat(f"unknown document format: {fmt!r}", stage="ingest")

    pages = tuple(Page(i + 1, text) for i, text in enumerate(page_texts))
    canonical = "\n".join(p.text for p in pages)
    if not canonical.strip():
        raise EmptyDocument("document has no text content", stage="ingest")
    return Document(doc_id=_content_id(canonical), pages=pages, metadata=dict(metadata or {}))


def chunk_document(
    doc: Document,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_CHUNK_OVERLAP,
) -> list[DocumentChunk]:
    """Split the canonical text into overlapping fixed-size windows.

    Window k starts at k * (chunk_size - overlap). Every chunk except the
    last has exactly chunk_size characters; the last one is never longer.
    Dropping the first ``overlap`` characters of every chunk but the first
    reconstructs the canonical text exactly.
    """
    if chunk_size <= 0:
        raise InvalidChunkParams(f"chunk_size must be positive, got {chunk_size}")
    if overlap < 0 or overlap >= chunk_size:
        raise InvalidChunkParams(
            f"overlap must satisfy 0 <= overlap < chunk_size, got overlap={overlap} chunk_size={chunk_size}"
        )

    text = doc.canonical_text
    if not text:
        return []

    stride = chunk_size - overlap
    chunks: list[DocumentChunk] = []
    start = 0
    while True:
        end = min(start + chunk_size, len(text))
        chunks.append(
            DocumentChunk(
                source_number=len(chunks),
                text=text[start:end],
                page_number=doc.page_for_offset(start),
                char_start=start,
                char_end=end,
            )
        )
        if end == len(text):
            break
        start += stride
    return chunks


def expected_chunk_count(text_length: int, chunk_size: int, overlap: int) -> int:
    """Closed form for the number of windows chunk_document produces."""
    if text_length <= chunk_size:
        return 1 if text_length > 0 else 0
    stride = chunk_size - overlap
    return -(-(text_length - chunk_size) // stride) + 1  # ceil division


def chunks_to_jsonl(chunks: Iterable[DocumentChunk]) -> str:
    lines = [json.dumps(c.to_json_obj(), ensure_ascii=False, sort_keys=True) for c in chunks]
    return "\n".join(lines) + ("\n" if lines else "")


def chunks_from_jsonl(raw: str) -> list[DocumentChunk]:
    out = []
    for line in raw.splitlines():
        if line.strip():
            out.append(DocumentChunk.from_json_obj(json.loads(line)))
    return out


def reassemble(chunks: Sequence[DocumentChunk], overlap: int = DEFAULT_CHUNK_OVERLAP) -> str:
    """Inverse of chunk_document for a full chunk sequence."""
    parts = []
    for i, chunk in enumerate(chunks):
        parts.append(chunk.text if i == 0 else chunk.text[overlap:])
    return "".join(parts)
