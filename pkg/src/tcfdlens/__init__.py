"""Retrieval-backed review of climate disclosures against the TCFD framework."""

from .analysis import AnalysisDeps, ReportAnalysis, analyze_report, answer_custom
from .embeddings import HashEmbeddingBackend, cosine_similarity
from .errors import TcfdLensError
from .gateway import CompletionParams, ModelAnswer, ScriptedLlmBackend
from .ingestion import Document,chunk_document, load_document
from .prompts import BasicInfo, GuidelineList, TcfdQuestion, load_questions, load_seed_guidelines
from .retrieval import build_context
from .storage import Workspace
from .traceability import cohens_kappa, evaluation_run, hallucination_rates, rouge_precision
from .vectorstore import VectorIndex, build_index, top_k

__version__ = "0.1.0"

__all__ = [
    "AnalysisDeps",
    "BasicInfo",
    "CompletionParams",
    "Document",
    "GuidelineList",
    "HashEmbeddingBackend",
    "ModelAnswer",
    "ReportAnalysis",
    "ScriptedLlmBackend",
    "TcfdLensError",
    "TcfdQuestion",
    "VectorIndex",
    "Workspace",
    "__version__",
    "analyze_report",
    "answer_custom",
    "build_context",
    "build_index",
    "chunk_document",
    "cohens_kappa",
    "cosine_similarity",
    "evaluation_run",
    "hallucination_rates",
    "load_document",
    "load_questions",
    "load_seed_guidelines",
    "rouge_precision",
    "top_k",
]
