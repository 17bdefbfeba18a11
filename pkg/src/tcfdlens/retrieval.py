"""Context assembly: query the index, format sources, fit a token budget.

Retrieved chunks are rendered as numbered source blocks. When the estimated
prompt size exceeds the budget, the lowest-scored chunks are dropped one at
a time until the prompt fits or only one chunk remains; that last chunk is
kept even if it still overflows, flagged as a warning state.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .embeddings import EmbeddingBackend
from .errors import EmptyIndex
from .vectorstore import ScoredChunk, VectorIndex, top_k

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = 20
DEFAULT_BUDGET_TOKENS = 4000

TokenEstimator = Callable[[str], int]


def estimate_tokens(text: str) -> int:
    """Cheap backend-agnostic token estimate: one token per 4 characters."""
    return math.ceil(len(text) / 4)


def format_sources(entries: Sequence[ScoredChunk]) -> str:
    """Render chunks as 'Content: .../Source: n' blocks, blank-line separated."""
    blocks = [f"Content: {e.chunk.text}\nSource: {e.source_number}\n" for e in entries]
    return "\n".join(blocks)


@dataclass(frozen=True)
class ContextWindow:
    entries: tuple[ScoredChunk, ...]   # retrieval-rank order
    formatted_text: str
    estimated_tokens: int              # overhead plus the formatted block
    budget_exceeded: bool = False      # single remaining chunk still too big

    @property
    def source_numbers(self) -> list[int]:
        return [e.source_number for e in self.entries]


def trim_to_budget(
    entries: Sequence[ScoredChunk],
    prompt_overhead_tokens: int,
    budget_tokens: int = DEFAULT_BUDGET_TOKENS,
    estimator: TokenEstimator = estimate_tokens,
) -> ContextWindow:
    """Drop lowest-scored entries until the estimate fits the budget.

    Ties on score are broken by dropping the higher source number first.
    Surviving entries keep their original (retrieval-rank) order.
    """
    kept = list(entries)
    while kept:
        formatted = format_sources(kept)
        total = prompt_overhead_tokens + estimator(formatted)
        if total <= budget_tokens or len(kept) == 1:
            exceeded = total > budget_tokens
            if exceeded:
                logger.warning(
                    "context still over budget with a single chunk (%d > %d tokens)",
                    total,
                    budget_tokens,
                )
            return ContextWindow(
                entries=tuple(kept),
                formatted_text=formatted,
                estimated_tokens=total,
                budget_exceeded=exceeded,
            )
        victim = min(kept, key=lambda e: (e.score, -e.source_number))
        kept.remove(victim)
    return ContextWindow(entries=(), formatted_text="", estimated_tokens=prompt_overhead_tokens)


def build_context(
    index: VectorIndex,
    query_text: str,
    backend: EmbeddingBackend,
    k: int = DEFAULT_TOP_K,
    prompt_overhead_tokens: int = 0,
    budget_tokens: int = DEFAULT_BUDGET_TOKENS,
    estimator: TokenEstimator = estimate_tokens,
) -> ContextWindow:
    """Retrieve the top-k chunks for a query and fit them to the budget."""
    if len(index) == 0:
        raise EmptyIndex(f"index for {index.doc_id!r} holds no chunks", stage="retrieve")
    query_vec = backend.embed([query_text])[0]
    ranked = top_k(index, query_vec, k)
    return trim_to_budget(ranked, prompt_overhead_tokens, budget_tokens, estimator)
