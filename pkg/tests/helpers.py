"""Shared fixture builders for the test suite.

Everything here is deterministic: documents are generated from seeded
patterns and model responses come from substring-matched rules, so the same
inputs always produce the same prompts, retrievals, and stored bytes.
"""

from __future__ import annotations

import json

from tcfdlens.embeddings import HashEmbeddingBackend
from tcfdlens.gateway import ScriptedLlmBackend, prompt_fingerprint
from tcfdlens.ingestion import Document, DocumentChunk, Page, chunk_document, load_document
from tcfdlens.prompts import load_questions
from tcfdlens.retrieval import trim_to_budget
from tcfdlens.vectorstore import ScoredChunk, VectorIndex, build_index

FILLER = "lorem ipsum dolor sit amet consectetur "

# Per-question conformity scores with their known half-up averages.
SCORE_SETS = {
    "all_zero": ([0] * 11, 0.00),
    "set_a": ([60, 60, 70, 60, 70, 50, 90, 70, 50, 75, 20], 61.36),
    "set_b": ([20, 40, 40, 60, 40, 40, 70, 60, 50, 70, 60], 50.00),
    "set_c": ([60, 60, 85, 90, 80, 60, 90, 85, 40, 70, 50], 70.00),
}


def make_chunk(source: int, text: str, page: int = 1, start: int = 0) -> DocumentChunk:
    return DocumentChunk(
        source_number=source,
        text=text,
        page_number=page,
        char_start=start,
        char_end=start + len(text),
    )


def make_context(chunks_with_scores, budget: int = 10**9):
    """ContextWindow over explicit (chunk, score) pairs, trimmed generously."""
    entries = [ScoredChunk(chunk, score) for chunk, score in chunks_with_scores]
    return trim_to_budget(entries, prompt_overhead_tokens=0, budget_tokens=budget)


def filler_text(length: int, inserts: dict[int, str] | None = None) -> str:
    """Deterministic filler with phrases spliced in at exact offsets."""
    base = (FILLER * (length // len(FILLER) + 1))[:length]
    for offset, phrase in sorted((inserts or {}).items()):
        if offset + len(phrase) > length:
            raise ValueError("insert runs past the end of the text")
        base = base[:offset] + phrase + base[offset + len(phrase):]
    return base


def corpus_text() -> str:
    """A small plausible disclosure corpus, a few thousand characters."""
    paragraphs = [
        "The board of directors oversees climate-related risks and opportunities "
        "through its audit committee, which receives quarterly briefings from the "
        "chief sustainability officer on emerging regulation and physical hazards.",
        "Management operates a climate steering group that assesses transition and "
        "physical risks, assigns owners for mitigation plans, and reports progress "
        "to the audit committee twice per year.",
        "Identified climate-related risks include carbon pricing, flood exposure at "
        "two coastal distribution centers, and reputational pressure from customers "
        "seeking low-carbon products over the short, medium, and long term.",
        "Scenario planning covers an orderly transition at 1.5 degrees and a "
        "disorderly transition at 3 degrees; the strategy remains resilient in both "
        "cases although margins compress under high carbon prices.",
        "Risk identification follows the enterprise risk framework: each business "
        "unit scores likelihood and impact annually, and climate factors are "
        "integrated into the corporate risk register with defined escalation paths.",
        "The company discloses scope 1 and scope 2 greenhouse gas emissions, "
        "measured in tonnes of carbon dioxide equivalent, and is extending its "
        "inventory to scope 3 categories covering purchased goods and logistics.",
        "Targets include a 42 percent reduction in absolute scope 1 and 2 emissions "
        "by 2030 against a 2020 baseline, interim milestones every three years, and "
        "executive pay linked to achieving them.",
    ]
    return "\n\n".join(paragraphs * 3)


def corpus_index(dim: int = 16, chunk_size: int = 500, overlap: int = 20) -> VectorIndex:
    doc = load_document(corpus_text(), fmt="plain_text")
    chunks = chunk_document(doc, chunk_size, overlap)
    return build_index(doc.doc_id, chunks, HashEmbeddingBackend(dim=dim))


def paged_document(n_pages: int = 33, page_len: int = 479) -> Document:
    """Pages sized so that chunking at 480 with no overlap maps chunk k to
    page k + 1 exactly (each page plus its joining newline is 480 chars)."""
    pages = []
    for i in range(n_pages):
        marker = f"page {i + 1:03d} "
        body = filler_text(page_len - len(marker))
        pages.append(Page(i + 1, marker + body))
    doc = Document(doc_id="paged-fixture", pages=tuple(pages))
    return doc


def answer_payload(text: str, sources: list[int]) -> str:
    return json.dumps({"ANSWER": text, "SOURCES": sources})


def conformity_payload(score: int, analysis: str = "Requirements are partially met.") -> str:
    return json.dumps({"ANALYSIS": analysis, "SCORE": score})


def basic_info_payload(name: str = "Northwind Logistics", location: str = "Rotterdam, Netherlands",
                       sector: str = "Transportation") -> str:
    return json.dumps({"COMPANY_NAME": name, "LOCATION": location, "SECTOR": sector})


def scripted_review_backend(
    scores: list[int],
    company: str | None = "Northwind Logistics",
    cited: list[int] | None = None,
    skip_answer_for: set[int] = frozenset(),
    extra_rules: list[tuple[str, str]] | None = None,
    default=None,
) -> ScriptedLlmBackend:
    """Rule-driven backend for full report runs.

    Keys on text that appears in exactly one prompt kind: the question text
    occurs only in answering prompts, the recommendation text only in scoring
    prompts, and the JSON key instructions only in the company-details prompt.
    extra_rules are consulted first; they let a test intercept prompts (such
    as guideline rewrites) that embed whole templates and would otherwise
    fall through to the broader keys below.
    """
    questions = load_questions()
    rules: list[tuple[str, str]] = list(extra_rules or [])
    if company is not None:
        rules.append(("COMPANY_NAME", basic_info_payload(name=company)))
    for q, score in zip(questions, scores):
        if q.index in skip_answer_for:
            rules.append((q.question_text, "sorry, no JSON today"))
        else:
            rules.append(
                (q.question_text,
                 answer_payload(f"The report addresses point {q.index} with cited extracts.",
                                cited if cited is not None else [0, 1]))
            )
        rules.append((q.recommendation_text, conformity_payload(score)))
    return ScriptedLlmBackend(rules=rules, default=default)


class RecordingBackend:
    """Wraps a backend and remembers every prompt/response pair by fingerprint."""

    def __init__(self, inner):
        self.inner = inner
        self.script: dict[str, str] = {}

    def complete(self, prompt_text, params):
        response = self.inner.complete(prompt_text, params)
        self.script[prompt_fingerprint(prompt_text)] = response
        return response

    def save(self, path) -> None:
        path.write_text(json.dumps(self.script, ensure_ascii=False, indent=2, sort_keys=True), "utf-8")


def rates_corpus(n_total: int, n_supported: int, n_honest: int):
    """Answer and annotation records realizing exact hallucination counts.

    Both annotators agree everywhere, so the adjudicated labels equal the
    constructed ones and the counts come out exactly as requested.
    """
    from tcfdlens.traceability import AnnotationRecord, AnswerRecord

    answers, annotations = [], []
    for i in range(n_total):
        answer_id = f"ans{i:04d}"
        if i < n_supported:
            content = "supported"
            source = "honest" if i < n_honest else "hallucinated"
        else:
            content, source = "hallucinated", "not_applicable"
        text = f"finding {i} states emissions fell in scope {i % 3 + 1}"
        answers.append(AnswerRecord(answer_id, text, (0,), text + " according to the report"))
        for annotator in ("rev-a", "rev-b"):
            annotations.append(AnnotationRecord(answer_id, annotator, content, source))
    return answers, annotations
