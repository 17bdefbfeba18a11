"""Exception taxonomy shared across the library.

Every error carries a stable ``code`` (used verbatim in service error bodies)
and an optional ``stage`` naming the pipeline stage that raised it.
"""

from __future__ import annotations


class TcfdLensError(Exception):
    """Base class for all library errors."""

    code = "error"

    def __init__(self, message: str, *, stage: str | None = None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def with_stage(self, stage: str) -> "TcfdLensError":
        if self.stage is None:
            self.stage = stage
        return self


# --- ingestion ---

class EmptyDocument(TcfdLensError):
    code = "empty_document"


class UnsupportedFormat(TcfdLensError):
    code = "unsupported_format"


class ExtractionFailure(TcfdLensError):
    code = "extraction_failure"


class InvalidChunkParams(TcfdLensError):
    code = "invalid_chunk_params"


# --- embeddings / vector store ---

class EmptyBatch(TcfdLensError):
    code = "empty_batch"


class DimensionMismatch(TcfdLensError):
    code = "dimension_mismatch"


class ZeroVector(TcfdLensError):
    code = "zero_vector"


class CorruptIndex(TcfdLensError):
    code = "corrupt_index"


class IoFailure(TcfdLensError):
    code = "io_failure"


# --- prompting ---

class MissingBinding(TcfdLensError):
    code = "missing_binding"


# --- model gateway ---

class BackendUnavailable(TcfdLensError):
    code = "backend_unavailable"


class BackendTimeout(TcfdLensError):
    code = "backend_timeout"


class RateLimited(TcfdLensError):
    code = "rate_limited"


class MalformedOutput(TcfdLensError):
    code = "malformed_output"


class MissingKey(TcfdLensError):
    code = "missing_key"

    def __init__(self, message: str, *, key: str | None = None, stage: str | None = None):
        super().__init__(message, stage=stage)
        self.key = key


class ScoreOutOfRange(TcfdLensError):
    code = "score_out_of_range"


# --- analysis ---

class EmptyIndex(TcfdLensError):
    code = "empty_index"


class AnalysisFailed(TcfdLensError):
    code = "analysis_failed"


# --- traceability / evaluation ---

class EmptyCandidate(TcfdLensError):
    code = "empty_candidate"


class FragmentTooShort(TcfdLensError):
    code = "fragment_too_short"


class LengthMismatch(TcfdLensError):
    code = "length_mismatch"


class MissingFinalLabel(TcfdLensError):
    code = "missing_final_label"


class MissingAdjudication(TcfdLensError):
    code = "missing_adjudication"


# --- feedback / guideline evolution ---

class CompanySpecificGuideline(TcfdLensError):
    code = "company_specific_guideline"


class InvalidTransition(TcfdLensError):
    code = "invalid_transition"


# --- storage ---

class NotFound(TcfdLensError):
    code = "not_found"


class Conflict(TcfdLensError):
    code = "conflict"


class CorruptRecord(TcfdLensError):
    code = "corrupt_record"
