"""Answer tracing and hallucination evaluation.

Covers the lexical overlap metrics (ROUGE precision variants), evidence
lookup inside cited chunks, a lint that catches answers stitched together
across chunk boundaries, inter-annotator agreement, and the two-annotator
evaluation protocol with adjudication.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import (
    EmptyCandidate,
    FragmentTooShort,
    LengthMismatch,
    MissingAdjudication,
    MissingFinalLabel,
)
from .ingestion import DocumentChunk

CONTENT_LABELS = ("supported", "hallucinated")
SOURCE_LABELS = ("honest", "hallucinated", "not_applicable")


def tokenize(text: str) -> list[str]:
    """Lowercase tokens split on any non-alphanumeric run."""
    return re.findall(r"[a-z0-9]+", text.lower())


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # single-row dynamic program; O(len(a) * len(b)) time, O(len(b)) space
    if not a or not b:
        return 0
    row = [0] * (len(b) + 1)
    for x in a:
        prev = 0
        for j, y in enumerate(b, start=1):
            cur = row[j]
            row[j] = prev + 1 if x == y else max(row[j], row[j - 1])
            prev = cur
    return row[len(b)]


def rouge_precision(candidate: str, reference: str, variant: str = "rouge1") -> float:
    """Precision-oriented ROUGE: how much of the candidate appears in the reference.

    Tokens are lowercased alphanumeric runs. A candidate with no units of the
    requested order (for example a one-token candidate under rouge2) counts
    as fully matched, which keeps rouge(x, x) = 1.0 for every non-empty x.
    """
    cand = tokenize(candidate)
    if not cand:
        raise EmptyCandidate("candidate text has no tokens")
    ref = tokenize(reference)

    if variant in ("rouge1", "rouge2"):
        n = 1 if variant == "rouge1" else 2
        cand_grams = _ngrams(cand, n)
        total = sum(cand_grams.values())
        if total == 0:
            return 1.0
        ref_grams = _ngrams(ref, n)
        overlap = sum(min(count, ref_grams[gram]) for gram, count in cand_grams.items())
        return overlap / total
    if variant == "rougeL":
        return _lcs_length(cand, ref) / len(cand)
    raise ValueError(f"unknown rouge variant: {variant!r}")


@dataclass(frozen=True)
class EvidenceMatch:
    source_number: int
    page_number: int
    start: int   # offsets into the chunk's original text
    end: int
    matched_text: str


def locate_evidence(fragment: str, chunks: Sequence[DocumentChunk]) -> list[EvidenceMatch]:
    """Find a quoted fragment inside chunk texts.

    Matching is case-insensitive and whitespace-insensitive (any whitespace
    run matches any other), but offsets refer to the original chunk text so
    a caller can highlight the exact span.
    """
    normalized = " ".join(fragment.split())
    if len(normalized) < 3:
        raise FragmentTooShort(f"fragment must be at least 3 characters, got {normalized!r}")

    parts = [re.escape(piece) for piece in normalized.split(" ")]
    pattern = re.compile(r"\s+".join(parts), re.IGNORECASE)

    matches = []
    for chunk in sorted(chunks, key=lambda c: c.source_number):
        for m in pattern.finditer(chunk.text):
            matches.append(
                EvidenceMatch(
                    source_number=chunk.source_number,
                    page_number=chunk.page_number,
                    start=m.start(),
                    end=m.end(),
                    matched_text=m.group(0),
                )
            )
    return matches


@dataclass(frozen=True)
class ConcatenationWarning:
    tail_source: int   # chunk whose ending opens the window
    head_source: int   # different chunk whose beginning closes it
    window_text: str


def lint_concatenation(
    answer_text: str,
    cited_chunks: Sequence[DocumentChunk],
    window: int = 6,
) -> list[ConcatenationWarning]:
    """Flag token windows that stitch the end of one cited chunk onto the
    start of another.

    A window is suspicious when some split (at least two tokens per side)
    makes its left part equal the final tokens of one chunk and its right
    part equal the opening tokens of a different chunk, while no single
    cited chunk contains the whole window. Such seams read fluently but
    fabricate a sentence no chunk actually contains.
    """
    if window < 4:
        raise ValueError("window must be at least 4 tokens (two per side)")
    answer_tokens = tokenize(answer_text)
    if len(answer_tokens) < window or len(cited_chunks) < 2:
        return []

    chunk_tokens = {c.source_number: tokenize(c.text) for c in cited_chunks}

    def contains(seq: Sequence[str], sub: Sequence[str]) -> bool:
        n = len(sub)
        return any(tuple(seq[i : i + n]) == tuple(sub) for i in range(len(seq) - n + 1))

    warnings: list[ConcatenationWarning] = []
    seen: set[tuple[int, int, str]] = set()
    for start in range(len(answer_tokens) - window + 1):
        win = answer_tokens[start : start + window]
        if any(contains(toks, win) for toks in chunk_tokens.values()):
            continue
        for split in range(2, window - 1):
            left, right = win[:split], win[split:]
            tail_sources = [
                s for s, toks in chunk_tokens.items()
                if len(toks) >= len(left) and toks[-len(left):] == left
            ]
            if not tail_sources:
                continue
            head_sources = [
                s for s, toks in chunk_tokens.items()
                if len(toks) >= len(right) and toks[: len(right)] == right
            ]
            for tail in tail_sources:
                for head in head_sources:
                    if head == tail:
                        continue
                    key = (tail, head, " ".join(win))
                    if key not in seen:
                        seen.add(key)
                        warnings.append(ConcatenationWarning(tail, head, " ".join(win)))
    return warnings


# --- annotation protocol ---

@dataclass(frozen=True)
class AnnotationRecord:
    answer_id: str
    annotator_id: str
    content_label: str   # supported | hallucinated
    source_label: str    # honest | hallucinated | not_applicable

    def __post_init__(self):
        if self.content_label not in CONTENT_LABELS:
            raise ValueError(f"content_label must be one of {CONTENT_LABELS}, got {self.content_label!r}")
        if self.source_label not in SOURCE_LABELS:
            raise ValueError(f"source_label must be one of {SOURCE_LABELS}, got {self.source_label!r}")
        # Source attribution is only meaningful for content that is supported.
        if (self.source_label == "not_applicable") != (self.content_label == "hallucinated"):
            raise ValueError(
                "source_label must be not_applicable exactly when content_label is hallucinated"
            )

    def to_json_obj(self) -> dict:
        return {
            "answer_id": self.answer_id,
            "annotator_id": self.annotator_id,
            "content_label": self.content_label,
            "source_label": self.source_label,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "AnnotationRecord":
        return cls(obj["answer_id"], obj["annotator_id"], obj["content_label"], obj["source_label"])


@dataclass(frozen=True)
class FinalLabel:
    content_label: str
    source_label: str


@dataclass(frozen=True)
class AnswerRecord:
    answer_id: str
    answer_text: str
    cited_sources: tuple[int, ...]
    context_text: str   # the retrieved extracts the answer was grounded on

    def to_json_obj(self) -> dict:
        return {
            "answer_id": self.answer_id,
            "answer": self.answer_text,
            "sources": list(self.cited_sources),
            "context": self.context_text,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "AnswerRecord":
        return cls(obj["answer_id"], obj["answer"], tuple(obj.get("sources", [])), obj.get("context", ""))


@dataclass(frozen=True)
class EvalSummary:
    n_total: int
    content_free_rate: float               # % of answers with supported content
    source_free_rate_given_content: float  # % of supported answers with honest sources
    rouge1_p: float
    rouge2_p: float
    rougeL_p: float
    kappa_content: float

    def to_json_obj(self) -> dict:
        return {
            "n_total": self.n_total,
            "content_free_rate": self.content_free_rate,
            "source_free_rate_given_content": self.source_free_rate_given_content,
            "rouge1_p": self.rouge1_p,
            "rouge2_p": self.rouge2_p,
            "rougeL_p": self.rougeL_p,
            "kappa_content": self.kappa_content,
        }


def hallucination_rates(
    annotations: Sequence[AnnotationRecord],
    final_labels: Mapping[str, FinalLabel],
) -> tuple[float, float]:
    """Percent of answers free of content hallucination, and of those, the
    percent whose cited sources are honest. Full precision, no rounding."""
    answer_ids = sorted({a.answer_id for a in annotations})
    if not answer_ids:
        return (0.0, 0.0)
    for answer_id in answer_ids:
        if answer_id not in final_labels:
            raise MissingFinalLabel(f"answer {answer_id!r} has no final label")
    supported = [a for a in answer_ids if final_labels[a].content_label == "supported"]
    honest = [a for a in supported if final_labels[a].source_label == "honest"]
    content_rate = 100.0 * len(supported) / len(answer_ids)
    source_rate = 100.0 * len(honest) / len(supported) if supported else 0.0
    return (content_rate, source_rate)


def cohens_kappa(labels_a: Sequence, labels_b: Sequence) -> float:
    """Chance-corrected agreement between two annotators.

    kappa = (p_o - p_e) / (1 - p_e) with p_e from the label marginals. When
    both annotators use a single shared category everywhere, agreement is
    total and degenerate, and the result is defined as 1.0.
    """
    if len(labels_a) != len(labels_b):
        raise LengthMismatch(f"label sequences differ in length: {len(labels_a)} vs {len(labels_b)}")
    if len(labels_a) == 0:
        raise LengthMismatch("label sequences are empty")

    n = len(labels_a)
    p_o = sum(1 for x, y in zip(labels_a, labels_b) if x == y) / n

    counts_a = Counter(labels_a)
    counts_b = Counter(labels_b)
    categories = set(counts_a) | set(counts_b)
    p_e = sum((counts_a[c] / n) * (counts_b[c] / n) for c in categories)

    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def resolve_final_labels(annotations: Sequence[AnnotationRecord]) -> dict[str, FinalLabel]:
    """Apply the two-annotators-plus-adjudicator protocol.

    The first two annotations of an answer form the primary pair. If they
    disagree on either dimension, a third annotation must exist and decides
    both labels; without one the answer is unresolvable.
    """
    by_answer: dict[str, list[AnnotationRecord]] = {}
    for record in annotations:
        by_answer.setdefault(record.answer_id, []).append(record)

    finals: dict[str, FinalLabel] = {}
    for answer_id, records in by_answer.items():
        if len(records) < 2:
            raise MissingAdjudication(f"answer {answer_id!r} has fewer than two annotations")
        first, second = records[0], records[1]
        agreed = (
            first.content_label == second.content_label
            and first.source_label == second.source_label
        )
        if agreed:
            finals[answer_id] = FinalLabel(first.content_label, first.source_label)
        elif len(records) >= 3:
            third = records[2]
            finals[answer_id] = FinalLabel(third.content_label, third.source_label)
        else:
            raise MissingAdjudication(
                f"annotators disagree on answer {answer_id!r} and no adjudication exists"
            )
    return finals


def primary_pair_labels(annotations: Sequence[AnnotationRecord]) -> tuple[list[str], list[str]]:
    """Content labels of the first and second annotator per answer, aligned."""
    by_answer: dict[str, list[AnnotationRecord]] = {}
    for record in annotations:
        by_answer.setdefault(record.answer_id, []).append(record)
    first, second = [], []
    for answer_id in sorted(by_answer):
        records = by_answer[answer_id]
        if len(records) < 2:
            raise MissingAdjudication(f"answer {answer_id!r} has fewer than two annotations")
        first.append(records[0].content_label)
        second.append(records[1].content_label)
    return first, second


def evaluation_run(
    answers: Sequence[AnswerRecord],
    annotations: Sequence[AnnotationRecord],
) -> EvalSummary:
    """Full evaluation pass: adjudicated hallucination rates, agreement on
    the primary annotator pair, and mean ROUGE precision of each answer
    against its own retrieved context."""
    finals = resolve_final_labels(annotations)
    content_rate, source_rate = hallucination_rates(annotations, finals)

    first, second = primary_pair_labels(annotations)
    kappa = cohens_kappa(first, second)

    r1 = r2 = rl = 0.0
    if answers:
        for record in answers:
            r1 += rouge_precision(record.answer_text, record.context_text, "rouge1")
            r2 += rouge_precision(record.answer_text, record.context_text, "rouge2")
            rl += rouge_precision(record.answer_text, record.context_text, "rougeL")
        r1 = 100.0 * r1 / len(answers)
        r2 = 100.0 * r2 / len(answers)
        rl = 100.0 * rl / len(answers)

    return EvalSummary(
        n_total=len({a.answer_id for a in annotations}),
        content_free_rate=content_rate,
        source_free_rate_given_content=source_rate,
        rouge1_p=r1,
        rouge2_p=r2,
        rougeL_p=rl,
        kappa_content=kappa,
    )


# --- corpus files ---

def load_answers_jsonl(raw: str) -> list[AnswerRecord]:
    return [AnswerRecord.from_json_obj(json.loads(line)) for line in raw.splitlines() if line.strip()]


def load_annotations_jsonl(raw: str) -> list[AnnotationRecord]:
    return [AnnotationRecord.from_json_obj(json.loads(line)) for line in raw.splitlines() if line.strip()]


def dump_jsonl(records: Iterable) -> str:
    lines = [json.dumps(r.to_json_obj(), ensure_ascii=False, sort_keys=True) for r in records]
    return "\n".join(lines) + ("\n" if lines else "")
