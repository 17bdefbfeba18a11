"""HTTP service over the analysis pipeline.

Uploading a report returns immediately with a content-addressed doc_id and
an indexing job; the full eleven-question analysis runs as a second job that
clients poll. Free-form questions are answered synchronously. Feedback and
guideline evolution are exposed for the review UI.

All request and response bodies are JSON except the upload, which takes the
raw report text as the request body (no multipart parser needed). Errors
share one shape: {"code": ..., "message": ..., "stage": ...}.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .analysis import AnalysisDeps, analyze_report, answer_custom, answer_id_for
from .config import AppConfig
from .errors import (
    AnalysisFailed,
    BackendTimeout,
    BackendUnavailable,
    CompanySpecificGuideline,
    Conflict,
    CorruptIndex,
    CorruptRecord,
    EmptyDocument,
    EmptyIndex,
    FragmentTooShort,
    InvalidTransition,
    MalformedOutput,
    MissingBinding,
    MissingKey,
    NotFound,
    RateLimited,
    ScoreOutOfRange,
    TcfdLensError,
    UnsupportedFormat,
)
from .feedback import PromptLabDeps, append_guideline, feedback_to_guideline, promote_guidelines
from .ingestion import chunk_document, load_document
from .prompts import load_template
from .storage import Workspace
from .traceability import locate_evidence
from .vectorstore import build_index

logger = logging.getLogger("tcfdlens.service")

_STATUS_BY_ERROR = {
    EmptyDocument: 400,
    UnsupportedFormat: 400,
    MissingBinding: 400,
    FragmentTooShort: 400,
    MalformedOutput: 400,
    MissingKey: 400,
    ScoreOutOfRange: 400,
    CompanySpecificGuideline: 400,
    NotFound: 404,
    Conflict: 409,
    InvalidTransition: 409,
    EmptyIndex: 409,
    BackendUnavailable: 502,
    BackendTimeout: 502,
    RateLimited: 502,
    AnalysisFailed: 502,
    CorruptIndex: 500,
    CorruptRecord: 500,
}


def _status_for(exc: TcfdLensError) -> int:
    for cls, status in _STATUS_BY_ERROR.items():
        if isinstance(exc, cls):
            return status
    return 500


JOB_STATES = ("queued", "running", "partial", "complete", "failed")


@dataclass
class Job:
    job_id: str
    kind: str            # "ingest" | "analyze"
    doc_id: str
    state: str = "queued"
    done: int = 0
    total: int = 0
    error: dict | None = None
    result_key: str | None = None
    created_at: float = field(default_factory=time.time)

    def to_json_obj(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "doc_id": self.doc_id,
            "state": self.state,
            "progress": {"done": self.done, "total": self.total},
            "error": self.error,
            "result_key": self.result_key,
        }


class JobRegistry:
    """In-memory job table. One active analyze job per document: a second
    request while one is queued or running returns the same handle."""

    def __init__(self, max_jobs: int):
        self._jobs: dict[str, Job] = {}
        self._active_by_doc: dict[tuple[str, str], str] = {}
        self._lock = threading.Lock()
        self._max_jobs = max_jobs

    def get(self, job_id: str) -> Job:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise NotFound(f"job {job_id!r} does not exist")
        return job

    def active_for(self, kind: str, doc_id: str) -> Job | None:
        with self._lock:
            job_id = self._active_by_doc.get((kind, doc_id))
            if job_id is None:
                return None
            job = self._jobs[job_id]
            if job.state in ("queued", "running"):
                return job
            del self._active_by_doc[(kind, doc_id)]
            return None

    def create(self, kind: str, doc_id: str) -> Job:
        with self._lock:
            active = sum(1 for j in self._jobs.values() if j.state in ("queued", "running"))
            if active >= self._max_jobs:
                _busy()
            job = Job(job_id=uuid.uuid4().hex[:12], kind=kind, doc_id=doc_id)
            self._jobs[job.job_id] = job
            self._active_by_doc[(kind, doc_id)] = job.job_id
            return job

    def set_progress(self, job: Job, done: int, total: int) -> None:
        with self._lock:
            job.done, job.total = done, total

    def transition(self, job: Job, state: str, error: dict | None = None, result_key: str | None = None) -> None:
        with self._lock:
            order = {"queued": 0, "running": 1, "partial": 2, "complete": 2, "failed": 2}
            if order[state] < order[job.state]:
                raise InvalidTransition(f"job cannot move from {job.state} back to {state}")
            job.state = state
            if error is not None:
                job.error = error
            if result_key is not None:
                job.result_key = result_key


class _Busy(TcfdLensError):
    code = "busy"


def _busy() -> None:
    raise _Busy("too many jobs in flight, retry later", stage="service")


def create_app(
    config: AppConfig | None = None,
    workspace: Workspace | None = None,
    llm=None,
    embedder=None,
) -> FastAPI:
    config = config or AppConfig.load()
    workspace = workspace or Workspace(config.workspace)
    llm = llm or config.make_llm_backend()
    embedder = embedder or config.make_embedder()

    app = FastAPI(
        title="tcfdlens",
        version=__version__,
        description=(
            "Retrieval-grounded analysis of corporate climate disclosures: "
            "traceable answers to the eleven TCFD review questions, conformity "
            "scoring, free-form questions, and an expert feedback loop."
        ),
    )
    jobs = JobRegistry(config.max_jobs)
    executor = ThreadPoolExecutor(max_workers=4, thread_name_prefix="tcfdlens-job")
    cqa_cache: dict[str, str] = {}  # answer_id -> raw model payload
    index_cache: dict[str, object] = {}
    cache_lock = threading.Lock()

    def make_deps() -> AnalysisDeps:
        return AnalysisDeps(
            llm=llm,
            embedder=embedder,
            guidelines=workspace.guidelines.load(),
            answer_length=config.answer_length,
            k=config.top_k,
            budget_tokens=config.budget_tokens,
            max_workers=config.max_workers,
        )

    def get_index(doc_id: str):
        with cache_lock:
            cached = index_cache.get(doc_id)
        if cached is not None:
            return cached
        index = workspace.get_index(doc_id)
        with cache_lock:
            index_cache[doc_id] = index
        return index

    # --- middleware ---

    @app.middleware("http")
    async def request_logging(request: Request, call_next):
        if config.api_key and request.url.path != "/healthz":
            provided = request.headers.get("x-api-key", "")
            if provided != config.api_key:
                return JSONResponse(
                    status_code=401,
                    content={"code": "unauthorized", "message": "missing or invalid API key", "stage": "service"},
                )
        started = time.time()
        response = await call_next(request)
        logger.info(
            json.dumps(
                {
                    "method": request.method,
                    "path": request.url.path,
                    "status": response.status_code,
                    "duration_ms": round((time.time() - started) * 1000, 2),
                }
            )
        )
        return response

    @app.exception_handler(TcfdLensError)
    async def domain_error_handler(request: Request, exc: TcfdLensError):
        status = 503 if isinstance(exc, _Busy) else _status_for(exc)
        return JSONResponse(
            status_code=status,
            content={"code": exc.code, "message": str(exc), "stage": exc.stage},
        )

    # --- reports ---

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "mock_backend": config.using_mock()}

    @app.post("/reports", status_code=202)
    async def upload_report(request: Request, format: str = "plain_text", title: str = ""):
        raw = await request.body()
        metadata = {"title": title} if title else {}
        doc = load_document(raw, fmt=format, metadata=metadata)
        try:
            workspace.put_document(doc)
        except Conflict:
            pass  # identical content already stored under this id

        existing = jobs.active_for("ingest", doc.doc_id)
        if existing is not None:
            return {"doc_id": doc.doc_id, "job_id": existing.job_id}

        job = jobs.create("ingest", doc.doc_id)

        def run_ingest():
            jobs.transition(job, "running")
            try:
                if not workspace.has_index(doc.doc_id):
                    chunks = chunk_document(doc, config.chunk_size, config.chunk_overlap)
                    index = build_index(doc.doc_id, chunks, embedder)
                    workspace.put_index(index)
                    with cache_lock:
                        index_cache[doc.doc_id] = index
                jobs.transition(job, "complete")
            except TcfdLensError as exc:
                jobs.transition(job, "failed", error={"code": exc.code, "message": str(exc), "stage": exc.stage})
            except Exception as exc:  # pragma: no cover - defensive
                jobs.transition(job, "failed", error={"code": "error", "message": str(exc), "stage": "ingest"})

        executor.submit(run_ingest)
        return {"doc_id": doc.doc_id, "job_id": job.job_id}

    @app.get("/reports")
    def list_reports():
        out = []
        for entry in workspace.list_documents():
            latest_average = None
            if entry.analyses:
                try:
                    latest_average = workspace.latest_analysis(entry.doc_id).average_score
                except TcfdLensError:
                    pass
            out.append(
                {
                    "doc_id": entry.doc_id,
                    "metadata": entry.metadata,
                    "pages": entry.pages,
                    "has_index": entry.has_index,
                    "analyses": list(entry.analyses),
                    "latest_average": latest_average,
                }
            )
        return {"reports": out}

    @app.get("/reports/{doc_id}/analysis")
    def get_analysis(doc_id: str):
        if not workspace.has_document(doc_id):
            raise NotFound(f"document {doc_id!r} does not exist")
        return workspace.latest_analysis(doc_id).to_json_obj()

    @app.post("/reports/{doc_id}/analyze", status_code=202)
    def start_analysis(doc_id: str):
        if not workspace.has_document(doc_id):
            raise NotFound(f"document {doc_id!r} does not exist")
        if not workspace.has_index(doc_id):
            raise Conflict(f"document {doc_id!r} is not indexed yet; wait for ingestion to finish")

        existing = jobs.active_for("analyze", doc_id)
        if existing is not None:
            return existing.to_json_obj()

        job = jobs.create("analyze", doc_id)
        jobs.set_progress(job, 0, 11)

        def run_analysis():
            jobs.transition(job, "running")
            try:
                index = get_index(doc_id)
                deps = make_deps()
                result = analyze_report(
                    index, deps, progress=lambda done, total: jobs.set_progress(job, done, total)
                )
                key = workspace.put_analysis(result)
                jobs.transition(job, result.status, result_key=key)
            except TcfdLensError as exc:
                jobs.transition(job, "failed", error={"code": exc.code, "message": str(exc), "stage": exc.stage})
            except Exception as exc:  # pragma: no cover - defensive
                jobs.transition(job, "failed", error={"code": "error", "message": str(exc), "stage": "analysis"})

        executor.submit(run_analysis)
        return job.to_json_obj()

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        return jobs.get(job_id).to_json_obj()

    # --- questions and evidence ---

    @app.post("/reports/{doc_id}/questions")
    def ask_question(doc_id: str, body: dict):
        question = (body or {}).get("question", "")
        if not isinstance(question, str) or not question.strip():
            raise MissingBinding("question must be a non-empty string", stage="service")
        if not workspace.has_document(doc_id):
            raise NotFound(f"document {doc_id!r} does not exist")
        index = get_index(doc_id)

        info = None
        try:
            info = workspace.latest_analysis(doc_id).basic_info
        except TcfdLensError:
            pass

        deps = make_deps()
        answer = answer_custom(index, question, deps, info=info)
        answer_id = f"{doc_id}:cqa:{uuid.uuid4().hex[:8]}"
        cqa_cache[answer_id] = answer.raw
        if len(cqa_cache) > 200:
            cqa_cache.pop(next(iter(cqa_cache)))
        payload = answer.to_json_obj()
        payload["answer_id"] = answer_id
        payload["question"] = question
        return payload

    @app.get("/reports/{doc_id}/evidence")
    def evidence(doc_id: str, fragment: str = ""):
        if not workspace.has_document(doc_id):
            raise NotFound(f"document {doc_id!r} does not exist")
        index = get_index(doc_id)
        matches = locate_evidence(fragment, list(index.chunks.values()))
        return {
            "fragment": fragment,
            "matches": [
                {
                    "source": m.source_number,
                    "page": m.page_number,
                    "start": m.start,
                    "end": m.end,
                    "text": m.matched_text,
                    "chunk_text": index.chunks[m.source_number].text,
                }
                for m in matches
            ],
        }

    # --- feedback and guidelines ---

    @app.post("/feedback", status_code=201)
    def post_feedback(body: dict):
        answer_id = (body or {}).get("answer_id", "")
        text = (body or {}).get("feedback_text", "")
        if not answer_id or not isinstance(answer_id, str):
            raise MissingBinding("answer_id is required", stage="service")
        if not text or not isinstance(text, str):
            raise MissingBinding("feedback_text is required", stage="service")
        record = workspace.feedback.record_feedback(
            answer_id=answer_id,
            expert_id=(body or {}).get("expert_id", "anonymous"),
            feedback_text=text,
            question_index=(body or {}).get("question_index"),
        )
        return record.to_json_obj()

    @app.get("/feedback")
    def list_feedback(status: str | None = None):
        return {"feedback": [r.to_json_obj() for r in workspace.feedback.list_feedback(status)]}

    def _resolve_old_response(answer_id: str) -> tuple[str, str | None]:
        """The raw model payload the feedback refers to, plus the company name."""
        if answer_id in cqa_cache:
            return cqa_cache[answer_id], None
        if ":q" in answer_id:
            doc_id, _, suffix = answer_id.rpartition(":q")
            try:
                question_index = int(suffix)
            except ValueError:
                raise NotFound(f"answer {answer_id!r} cannot be resolved")
            analysis = workspace.latest_analysis(doc_id)
            answer = analysis.answers.get(question_index)
            if answer is None:
                raise NotFound(f"answer {answer_id!r} is not part of the stored analysis")
            return answer.raw, analysis.basic_info.company_name
        raise NotFound(f"answer {answer_id!r} cannot be resolved")

    @app.post("/guidelines/transform/{feedback_id}")
    def transform_feedback(feedback_id: str, body: dict | None = None):
        record = workspace.feedback.get(feedback_id)
        old_response, company_name = _resolve_old_response(record.answer_id)

        current = workspace.guidelines.load()
        deps = PromptLabDeps(llm=llm, company_name=company_name)
        guideline = feedback_to_guideline(
            record,
            current,
            original_prompt=load_template("qa"),
            old_response=old_response,
            deps=deps,
        )

        scope = (body or {}).get("scope", "general")
        question_index = record.question_index if scope == "specific" else None
        if scope == "specific" and question_index is None:
            raise MissingBinding("specific scope requires feedback with a question_index", stage="service")
        updated = append_guideline(
            current,
            guideline,
            scope=scope,
            question_index=question_index,
            origin=record.feedback_id,
        )
        workspace.guidelines.save(updated)
        workspace.feedback.set_status(feedback_id, "transformed")
        return {"guideline": guideline, "version": updated.version, "scope": scope, "status": "draft"}

    @app.post("/guidelines/promote/{version}")
    def promote(version: int):
        current = workspace.guidelines.load()
        updated = promote_guidelines(current, version)
        workspace.guidelines.save(updated)
        return updated.to_json_obj()

    @app.get("/guidelines")
    def get_guidelines():
        return workspace.guidelines.load().to_json_obj()

    return app


def main():  # pragma: no cover - thin wrapper
    import uvicorn

    config = AppConfig.load()
    uvicorn.run(create_app(config), host="127.0.0.1", port=8000)


if __name__ == "__main__":  # pragma: no cover
    main()
