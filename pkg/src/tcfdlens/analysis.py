"""Report-level orchestration: run the eleven questions over an indexed
report, collect traceable answers and conformity scores, and aggregate.

Each question costs two model calls (answering and scoring) plus one shared
call for company basics, 23 calls per report in total. Questions can run
concurrently; results are keyed by question index so the output does not
depend on completion order.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal
from threading import Lock
from typing import Callable

from .embeddings import EmbeddingBackend
from .errors import AnalysisFailed, EmptyIndex, MalformedOutput, TcfdLensError
from .gateway import (
    CompletionParams,
    ConformityResult,
    LlmBackend,
    ModelAnswer,
    complete,
    extract_json_object,
    parse_answer_json,
    parse_conformity_json,
)
from .prompts import (
    DEFAULT_ANSWER_LENGTH,
    BasicInfo,
    GuidelineList,
    TcfdQuestion,
    load_questions,
    load_requirements,
    load_seed_guidelines,
    render_basic_info_prompt,
    render_conformity_prompt,
    render_cqa_prompt,
    render_guideline_block,
    render_qa_prompt,
    render_summary_prompt,
    skeleton_text,
)
from .retrieval import (
    DEFAULT_BUDGET_TOKENS,
    DEFAULT_TOP_K,
    ContextWindow,
    TokenEstimator,
    build_context,
    estimate_tokens,
)
from .vectorstore import VectorIndex

logger = logging.getLogger(__name__)

QUESTION_COUNT = 11

# Retrieval query used to pull the extracts that reveal who the company is.
BASIC_INFO_QUERY = "company name headquarters sector"

ProgressCallback = Callable[[int, int], None]


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def answer_id_for(doc_id: str, question_index: int) -> str:
    return f"{doc_id}:q{question_index}"


@dataclass
class AnalysisDeps:
    """Everything analyze_report needs besides the index itself."""

    llm: LlmBackend
    embedder: EmbeddingBackend
    params: CompletionParams = field(default_factory=CompletionParams)
    guidelines: GuidelineList | None = None
    questions: list[TcfdQuestion] | None = None
    requirements: dict[int, str] | None = None
    answer_length: int = DEFAULT_ANSWER_LENGTH
    k: int = DEFAULT_TOP_K
    budget_tokens: int = DEFAULT_BUDGET_TOKENS
    estimator: TokenEstimator = estimate_tokens
    use_summarization_template: bool = False
    max_workers: int = 1
    clock: Callable[[], str] = utc_now_iso

    def __post_init__(self):
        if self.guidelines is None:
            self.guidelines = load_seed_guidelines()
        if self.questions is None:
            self.questions = load_questions(self.guidelines)
        if self.requirements is None:
            self.requirements = load_requirements()


def _context_for(index: VectorIndex, query: str, overhead: int, deps: AnalysisDeps) -> ContextWindow:
    return build_context(
        index,
        query,
        deps.embedder,
        k=deps.k,
        prompt_overhead_tokens=overhead,
        budget_tokens=deps.budget_tokens,
        estimator=deps.estimator,
    )


def fetch_basic_info(index: VectorIndex, deps: AnalysisDeps) -> BasicInfo:
    """One retrieval plus one model call for company name, location, sector."""
    overhead = deps.estimator(skeleton_text("basic_info", {}))
    ctx = _context_for(index, BASIC_INFO_QUERY, overhead, deps)
    prompt = render_basic_info_prompt(ctx)
    raw = complete(prompt.text, deps.params, deps.llm)
    try:
        obj = extract_json_object(raw)
    except MalformedOutput as exc:
        raise exc.with_stage("basic_info")

    def clean(key: str) -> str:
        value = obj.get(key)
        if isinstance(value, str) and value.strip():
            return value.strip()
        return "unknown"

    return BasicInfo(clean("COMPANY_NAME"), clean("LOCATION"), clean("SECTOR"))


def summarize_tcfd(
    index: VectorIndex,
    question: TcfdQuestion,
    info: BasicInfo,
    deps: AnalysisDeps,
) -> ModelAnswer:
    """Answer one review question from retrieved extracts, citing sources."""
    guideline_block = render_guideline_block(
        deps.guidelines, deps.answer_length, question_index=question.index
    )
    if deps.use_summarization_template:
        template_id = "summarization"
        skeleton_bindings = {
            "critical_element": question.recommendation_text,
            "basic_info": info.block(),
            "guidelines": guideline_block,
        }
    else:
        template_id = "qa"
        skeleton_bindings = {
            "basic_info": info.block(),
            "question": question.question_text,
            "guidelines": guideline_block,
        }
    overhead = deps.estimator(skeleton_text(template_id, skeleton_bindings))
    ctx = _context_for(index, question.question_text, overhead, deps)

    if deps.use_summarization_template:
        prompt = render_summary_prompt(info, question, ctx, deps.guidelines, deps.answer_length)
    else:
        prompt = render_qa_prompt(info, question, ctx, deps.guidelines, deps.answer_length)

    raw = complete(prompt.text, deps.params, deps.llm)
    try:
        return parse_answer_json(raw, valid_sources=index.source_numbers())
    except TcfdLensError as exc:
        raise exc.with_stage("answer")


def assess_conformity(index: VectorIndex, question: TcfdQuestion, deps: AnalysisDeps) -> ConformityResult:
    """Score how well the report's relevant extracts satisfy the question's
    disclosure requirements."""
    requirements = deps.requirements[question.index]
    skeleton_bindings = {
        "critical_element": question.recommendation_text,
        "requirements": requirements,
    }
    overhead = deps.estimator(skeleton_text("conformity", skeleton_bindings))
    ctx = _context_for(index, question.question_text, overhead, deps)
    prompt = render_conformity_prompt(question, requirements, ctx.formatted_text, ctx.source_numbers)
    raw = complete(prompt.text, deps.params, deps.llm)
    try:
        return parse_conformity_json(raw, question.index)
    except TcfdLensError as exc:
        raise exc.with_stage("conformity")


def answer_custom(
    index: VectorIndex,
    question_text: str,
    deps: AnalysisDeps,
    info: BasicInfo | None = None,
) -> ModelAnswer:
    """Free-form question over an indexed report. The returned answer carries
    the page numbers of its cited chunks, deduplicated in citation order."""
    if len(index) == 0:
        raise EmptyIndex(f"index for {index.doc_id!r} holds no chunks", stage="retrieve")
    info = info or BasicInfo.unknown()
    guideline_block = render_guideline_block(deps.guidelines, deps.answer_length, cqa=True)
    skeleton_bindings = {
        "basic_info": info.block(),
        "question": question_text,
        "guidelines": guideline_block,
    }
    overhead = deps.estimator(skeleton_text("qa", skeleton_bindings))
    ctx = _context_for(index, question_text, overhead, deps)
    prompt = render_cqa_prompt(info, question_text, ctx, deps.guidelines, deps.answer_length)
    raw = complete(prompt.text, deps.params, deps.llm)
    try:
        answer = parse_answer_json(raw, valid_sources=index.source_numbers())
    except TcfdLensError as exc:
        raise exc.with_stage("answer")

    pages: list[int] = []
    for source in answer.citation_order:
        page = index.chunks[source].page_number
        if page not in pages:
            pages.append(page)
    return replace(answer, pages=tuple(pages))


def round_average(scores: list[int]) -> float:
    """Arithmetic mean rounded half-up to two decimals."""
    total = Decimal(sum(scores))
    mean = total / Decimal(len(scores))
    return float(mean.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ReportAnalysis:
    doc_id: str
    created_at: str
    status: str                       # "complete" | "partial"
    basic_info: BasicInfo
    answers: dict[int, ModelAnswer]
    conformity: dict[int, ConformityResult]
    average_score: float | None
    guideline_version: int
    errors: tuple[dict, ...] = ()

    def to_json_obj(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "created_at": self.created_at,
            "status": self.status,
            "basic_info": {
                "company_name": self.basic_info.company_name,
                "location": self.basic_info.location,
                "sector": self.basic_info.sector,
            },
            "answers": {str(k): v.to_json_obj() for k, v in sorted(self.answers.items())},
            "conformity": {str(k): v.to_json_obj() for k, v in sorted(self.conformity.items())},
            "average_score": self.average_score,
            "guideline_version": self.guideline_version,
            "errors": list(self.errors),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ReportAnalysis":
        info = obj["basic_info"]
        return cls(
            doc_id=obj["doc_id"],
            created_at=obj["created_at"],
            status=obj["status"],
            basic_info=BasicInfo(info["company_name"], info["location"], info["sector"]),
            answers={int(k): ModelAnswer.from_json_obj(v) for k, v in obj["answers"].items()},
            conformity={
                int(k): ConformityResult.from_json_obj(v) for k, v in obj["conformity"].items()
            },
            average_score=obj["average_score"],
            guideline_version=obj["guideline_version"],
            errors=tuple(obj.get("errors", [])),
        )

    @classmethod
    def from_json(cls, raw: str) -> "ReportAnalysis":
        return cls.from_json_obj(json.loads(raw))


def _error_record(question_index: int | None, exc: TcfdLensError) -> dict:
    return {
        "question_index": question_index,
        "stage": exc.stage or "analysis",
        "code": exc.code,
        "message": str(exc),
    }


def analyze_report(
    index: VectorIndex,
    deps: AnalysisDeps,
    progress: ProgressCallback | None = None,
) -> ReportAnalysis:
    """Run all eleven questions over an indexed report.

    Failed questions are recorded and skipped (status "partial"); if every
    question fails outright the whole run is an error. The result is fully
    determined by the index, the deps, and the clock, never by completion
    order.
    """
    if len(index) == 0:
        raise EmptyIndex(f"index for {index.doc_id!r} holds no chunks", stage="retrieve")

    errors: list[dict] = []
    try:
        info = fetch_basic_info(index, deps)
    except TcfdLensError as exc:
        logger.warning("basic info extraction failed (%s); continuing with unknowns", exc.code)
        info = BasicInfo.unknown()
        errors.append(_error_record(None, exc))

    questions = {q.index: q for q in deps.questions}
    answers: dict[int, ModelAnswer] = {}
    conformity: dict[int, ConformityResult] = {}
    done = 0
    lock = Lock()

    ordered = [questions[i] for i in sorted(questions)]

    def run_question(q: TcfdQuestion) -> tuple[int, ModelAnswer | None, ConformityResult | None, list[dict]]:
        nonlocal done
        q_errors: list[dict] = []
        answer = None
        score = None
        try:
            answer = summarize_tcfd(index, q, info, deps)
        except TcfdLensError as exc:
            q_errors.append(_error_record(q.index, exc))
        try:
            score = assess_conformity(index, q, deps)
        except TcfdLensError as exc:
            q_errors.append(_error_record(q.index, exc))
        with lock:
            done += 1
            if progress is not None:
                progress(done, len(ordered))
        return q.index, answer, score, q_errors

    if deps.max_workers > 1:
        with ThreadPoolExecutor(max_workers=deps.max_workers) as pool:
            results = list(pool.map(run_question, ordered))
    else:
        results = [run_question(q) for q in ordered]

    for q_index, answer, score, q_errors in results:
        if answer is not None:
            answers[q_index] = answer
        if score is not None:
            conformity[q_index] = score
        errors.extend(q_errors)

    if not answers and not conformity:
        raise AnalysisFailed(
            f"all {len(ordered)} questions failed for {index.doc_id!r}", stage="analysis"
        )

    errors.sort(key=lambda e: (e["question_index"] is not None, e["question_index"] or 0, e["stage"]))
    scores = [conformity[i].score for i in sorted(conformity)]
    status = "complete" if (len(answers) == len(ordered) and len(conformity) == len(ordered) and not errors) else "partial"

    return ReportAnalysis(
        doc_id=index.doc_id,
        created_at=deps.clock(),
        status=status,
        basic_info=info,
        answers=answers,
        conformity=conformity,
        average_score=round_average(scores) if scores else None,
        guideline_version=deps.guidelines.version,
        errors=tuple(errors),
    )
