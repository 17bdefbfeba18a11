"""Filesystem workspace: content-addressed documents, their indexes, and a
history of analyses.

Layout under the root:
    catalog.json                  inventory, updated atomically with writes
    guidelines.json               versioned guideline list
    feedback.jsonl                append-only feedback log
    {doc_id}/document.json        ingested document
    {doc_id}/index.bin            vector index
    {doc_id}/analyses/{ts}.json   immutable analysis results

Writes go to a temp file in the same directory and are renamed into place.
Analysis files embed a checksum so tampering shows up on read.
"""

from __future__ import annotations

import hashlib
import json
import re
import shutil
from dataclasses import dataclass
from pathlib import Path

from .analysis import ReportAnalysis
from .errors import Conflict, CorruptRecord, IoFailure, NotFound
from .feedback import FeedbackStore, GuidelineStore
from .ingestion import Document
from .vectorstore import VectorIndex, load_index, save_index


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, "utf-8")
        tmp.replace(path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}")


@dataclass(frozen=True)
class CatalogEntry:
    doc_id: str
    metadata: dict
    pages: int
    has_index: bool
    analyses: tuple[str, ...]  # timestamps, oldest first


class Workspace:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.guidelines = GuidelineStore(self.root / "guidelines.json")
        self.feedback = FeedbackStore(self.root / "feedback.jsonl")

    # --- catalog ---

    @property
    def _catalog_path(self) -> Path:
        return self.root / "catalog.json"

    def _read_catalog(self) -> dict:
        if not self._catalog_path.exists():
            return {}
        try:
            return json.loads(self._catalog_path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptRecord(f"catalog is unreadable: {exc}")

    def _write_catalog(self, catalog: dict) -> None:
        _atomic_write_text(self._catalog_path, json.dumps(catalog, ensure_ascii=False, indent=2, sort_keys=True))

    # --- documents ---

    def put_document(self, doc: Document) -> str:
        """Store a document under its content hash. Idempotent for identical
        content; a different document under the same id is a conflict."""
        doc_dir = self.root / doc.doc_id
        doc_path = doc_dir / "document.json"
        serialized = doc.to_json()
        if doc_path.exists():
            if doc_path.read_text("utf-8") == serialized:
                return doc.doc_id
            raise Conflict(f"document {doc.doc_id} already exists with different content")
        doc_dir.mkdir(parents=True, exist_ok=True)
        (doc_dir / "analyses").mkdir(exist_ok=True)
        _atomic_write_text(doc_path, serialized)

        catalog = self._read_catalog()
        catalog[doc.doc_id] = {"metadata": doc.metadata, "pages": len(doc.pages)}
        self._write_catalog(catalog)
        return doc.doc_id

    def get_document(self, doc_id: str) -> Document:
        path = self.root / doc_id / "document.json"
        if not path.exists():
            raise NotFound(f"document {doc_id!r} does not exist")
        return Document.from_json(path.read_text("utf-8"))

    def has_document(self, doc_id: str) -> bool:
        return (self.root / doc_id / "document.json").exists()

    def delete_document(self, doc_id: str, force: bool = False) -> None:
        doc_dir = self.root / doc_id
        if not (doc_dir / "document.json").exists():
            raise NotFound(f"document {doc_id!r} does not exist")
        if self.list_analyses(doc_id) and not force:
            raise Conflict(f"document {doc_id!r} has stored analyses; pass force to delete anyway")
        shutil.rmtree(doc_dir)
        catalog = self._read_catalog()
        catalog.pop(doc_id, None)
        self._write_catalog(catalog)

    def list_documents(self) -> list[CatalogEntry]:
        catalog = self._read_catalog()
        entries = []
        for doc_id in sorted(catalog):
            entries.append(
                CatalogEntry(
                    doc_id=doc_id,
                    metadata=catalog[doc_id].get("metadata", {}),
                    pages=catalog[doc_id].get("pages", 0),
                    has_index=(self.root / doc_id / "index.bin").exists(),
                    analyses=tuple(self.list_analyses(doc_id)),
                )
            )
        return entries

    # --- indexes ---

    def put_index(self, index: VectorIndex) -> None:
        doc_dir = self.root / index.doc_id
        if not (doc_dir / "document.json").exists():
            raise NotFound(f"document {index.doc_id!r} does not exist")
        save_index(index, doc_dir / "index.bin")

    def get_index(self, doc_id: str) -> VectorIndex:
        path = self.root / doc_id / "index.bin"
        if not path.exists():
            raise NotFound(f"document {doc_id!r} has no index")
        return load_index(path)

    def has_index(self, doc_id: str) -> bool:
        return (self.root / doc_id / "index.bin").exists()

    # --- analyses ---

    @staticmethod
    def _timestamp_slug(created_at: str) -> str:
        return re.sub(r"[^0-9TZ]", "", created_at.replace("+00:00", "Z")) or "unknown"

    def put_analysis(self, analysis: ReportAnalysis) -> str:
        """Store an analysis immutably, keyed by its creation timestamp."""
        doc_dir = self.root / analysis.doc_id
        if not (doc_dir / "document.json").exists():
            raise NotFound(f"document {analysis.doc_id!r} does not exist")
        analyses_dir = doc_dir / "analyses"
        analyses_dir.mkdir(exist_ok=True)

        slug = self._timestamp_slug(analysis.created_at)
        path = analyses_dir / f"{slug}.json"
        counter = 1
        while path.exists():
            path = analyses_dir / f"{slug}-{counter}.json"
            counter += 1

        body = analysis.to_json()
        checksum = hashlib.sha256(body.encode("utf-8")).hexdigest()
        _atomic_write_text(path, json.dumps({"checksum": checksum, "analysis": json.loads(body)}, ensure_ascii=False, sort_keys=True))
        return path.stem

    def get_analysis(self, doc_id: str, key: str) -> ReportAnalysis:
        path = self.root / doc_id / "analyses" / f"{key}.json"
        if not path.exists():
            raise NotFound(f"analysis {key!r} for document {doc_id!r} does not exist")
        try:
            wrapper = json.loads(path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptRecord(f"analysis file {path} is unreadable: {exc}")
        body = json.dumps(wrapper.get("analysis"), ensure_ascii=False, sort_keys=True)
        if hashlib.sha256(body.encode("utf-8")).hexdigest() != wrapper.get("checksum"):
            raise CorruptRecord(f"analysis file {path} failed its checksum")
        return ReportAnalysis.from_json(body)

    def list_analyses(self, doc_id: str) -> list[str]:
        analyses_dir = self.root / doc_id / "analyses"
        if not analyses_dir.exists():
            return []
        return sorted(p.stem for p in analyses_dir.glob("*.json"))

    def latest_analysis(self, doc_id: str) -> ReportAnalysis:
        keys = self.list_analyses(doc_id)
        if not keys:
            raise NotFound(f"document {doc_id!r} has no stored analysis")
        return self.get_analysis(doc_id, keys[-1])

    # --- integrity ---

    def check(self) -> list[str]:
        """Compare the catalog against the filesystem. Reports problems,
        never repairs them."""
        issues = []
        catalog = self._read_catalog()
        reserved = {"catalog.json", "guidelines.json", "feedback.jsonl"}

        for doc_id in sorted(catalog):
            doc_dir = self.root / doc_id
            if not (doc_dir / "document.json").exists():
                issues.append(f"missing: {doc_id}/document.json is cataloged but absent")
                continue
            try:
                doc = self.get_document(doc_id)
                if doc.doc_id != doc_id:
                    issues.append(f"mismatch: {doc_id}/document.json declares doc_id {doc.doc_id}")
            except (json.JSONDecodeError, KeyError) as exc:
                issues.append(f"corrupt: {doc_id}/document.json cannot be parsed ({exc})")

        for path in sorted(self.root.iterdir()):
            if path.name in reserved or path.name.endswith(".tmp"):
                continue
            if path.is_dir():
                if path.name not in catalog:
                    issues.append(f"orphan: directory {path.name} is not in the catalog")
            else:
                issues.append(f"orphan: unexpected file {path.name} at the workspace root")
        return issues
