"""Prompt templates, the eleven review questions, and guideline rendering.

Templates live as plain text files under ``templates/`` with ``{name}``
placeholders; the question list and the seed guidelines are JSON files under
``data/``. Substitution is a single pass over the template, so substituted
values that happen to contain braces are never re-interpreted.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

from .errors import MissingBinding
from .retrieval import ContextWindow

TEMPLATE_IDS = ("qa", "summarization", "conformity", "cqa", "prompt_engineering", "basic_info")

# Questions 1-2 cover governance, 3-5 strategy, 6-8 risk management,
# 9-11 metrics and targets.
CATEGORY_BY_INDEX = {
    1: "Governance", 2: "Governance",
    3: "Strategy", 4: "Strategy", 5: "Strategy",
    6: "RiskManagement", 7: "RiskManagement", 8: "RiskManagement",
    9: "MetricsTargets", 10: "MetricsTargets", 11: "MetricsTargets",
}

DEFAULT_ANSWER_LENGTH = 150

# Extra guideline used instead of a per-question one when answering free-form
# user questions.
CQA_GUIDELINE = "If the question is not answerable from the report, state that explicitly."

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


def load_template(template_id: str) -> str:
    """Raw template text. The file's single trailing newline is stripped."""
    if template_id == "cqa":  # free-form questions reuse the answering skeleton
        template_id = "qa"
    if template_id not in TEMPLATE_IDS:
        raise KeyError(f"unknown template id: {template_id!r}")
    text = resources.files("tcfdlens.templates").joinpath(f"{template_id}.txt").read_text("utf-8")
    return text[:-1] if text.endswith("\n") else text


def _substitute(template: str, bindings: Mapping[str, str], allow_empty: frozenset = frozenset()) -> str:
    names = set(_PLACEHOLDER_RE.findall(template))
    for name in sorted(names):
        if name not in bindings:
            raise MissingBinding(f"template placeholder {{{name}}} has no binding", stage="prompt")
        if bindings[name] == "" and name not in allow_empty:
            raise MissingBinding(f"template placeholder {{{name}}} is bound to an empty value", stage="prompt")

    def repl(match: re.Match) -> str:
        return bindings[match.group(1)]

    return _PLACEHOLDER_RE.sub(repl, template)


@dataclass(frozen=True)
class BasicInfo:
    company_name: str
    location: str
    sector: str

    def block(self) -> str:
        for label, value in (
            ("company_name", self.company_name),
            ("location", self.location),
            ("sector", self.sector),
        ):
            if not value:
                raise MissingBinding(f"basic info field {label} is empty", stage="prompt")
        return f"Company name: {self.company_name}\nLocation: {self.location}\nSector: {self.sector}"

    @classmethod
    def unknown(cls) -> "BasicInfo":
        return cls("unknown", "unknown", "unknown")


@dataclass(frozen=True)
class TcfdQuestion:
    index: int                 # 1..11
    category: str
    question_text: str
    recommendation_text: str
    specific_guideline: str    # numbered "8. ..." in the seed data

    def __post_init__(self):
        if self.index not in CATEGORY_BY_INDEX:
            raise ValueError(f"question index must be 1..11, got {self.index}")
        if self.category != CATEGORY_BY_INDEX[self.index]:
            raise ValueError(
                f"question {self.index} must have category {CATEGORY_BY_INDEX[self.index]}, got {self.category}"
            )
        if not self.question_text or not self.specific_guideline:
            raise ValueError(f"question {self.index} is missing text or its specific guideline")


@dataclass(frozen=True)
class GuidelineEntry:
    text: str
    origin: str = "seed"       # "seed" or a feedback id
    status: str = "active"     # "active" | "draft"
    added_version: int = 1

    def to_json_obj(self) -> dict:
        return {
            "text": self.text,
            "origin": self.origin,
            "status": self.status,
            "added_version": self.added_version,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "GuidelineEntry":
        return cls(
            text=obj["text"],
            origin=obj.get("origin", "seed"),
            status=obj.get("status", "active"),
            added_version=obj.get("added_version", 1),
        )


@dataclass(frozen=True)
class GuidelineList:
    version: int
    general: tuple[GuidelineEntry, ...]
    specific: dict[int, GuidelineEntry] = field(default_factory=dict)

    def __post_init__(self):
        if self.version < 1:
            raise ValueError(f"guideline version must be >= 1, got {self.version}")

    def active_general(self) -> list[GuidelineEntry]:
        return [e for e in self.general if e.status == "active"]

    def active_specific(self, question_index: int) -> GuidelineEntry | None:
        entry = self.specific.get(question_index)
        if entry is not None and entry.status == "active":
            return entry
        return None

    def to_json_obj(self) -> dict:
        return {
            "version": self.version,
            "general": [e.to_json_obj() for e in self.general],
            "specific": {str(k): v.to_json_obj() for k, v in sorted(self.specific.items())},
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "GuidelineList":
        return cls(
            version=obj["version"],
            general=tuple(GuidelineEntry.from_json_obj(e) for e in obj["general"]),
            specific={int(k): GuidelineEntry.from_json_obj(v) for k, v in obj.get("specific", {}).items()},
        )


_LEADING_NUMBER_RE = re.compile(r"^\s*\d+\.\s*")


def _renumber(text: str, number: int) -> str:
    return f"{number}. {_LEADING_NUMBER_RE.sub('', text)}"


def render_guideline_block(
    guidelines: GuidelineList,
    answer_length: int = DEFAULT_ANSWER_LENGTH,
    question_index: int | None = None,
    cqa: bool = False,
) -> str:
    """Numbered guideline lines: active general entries, then either the
    question's specific entry or the free-form question entry, renumbered to
    stay contiguous."""
    if answer_length < 1:
        raise MissingBinding(f"answer_length must be a positive word count, got {answer_length}", stage="prompt")
    lines = []
    for i, entry in enumerate(guidelines.active_general(), start=1):
        lines.append(f"{i}. {entry.text.replace('{answer_length}', str(answer_length))}")
    next_number = len(lines) + 1
    if question_index is not None:
        entry = guidelines.active_specific(question_index)
        if entry is not None:
            lines.append(_renumber(entry.text, next_number))
    elif cqa:
        lines.append(f"{next_number}. {CQA_GUIDELINE}")
    return "\n".join(lines)


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    template_id: str
    included_sources: tuple[int, ...]
    bindings: dict[str, str] = field(default_factory=dict, repr=False)


def _finish(template_id: str, bindings: dict[str, str], sources: Sequence[int]) -> RenderedPrompt:
    text = _substitute(load_template(template_id), bindings)
    return RenderedPrompt(
        text=text,
        template_id=template_id,
        included_sources=tuple(sources),
        bindings=bindings,
    )


def render_qa_prompt(
    info: BasicInfo,
    question: TcfdQuestion,
    ctx: ContextWindow,
    guidelines: GuidelineList,
    answer_length: int = DEFAULT_ANSWER_LENGTH,
) -> RenderedPrompt:
    bindings = {
        "basic_info": info.block(),
        "question": question.question_text,
        "context": ctx.formatted_text,
        "guidelines": render_guideline_block(guidelines, answer_length, question_index=question.index),
    }
    return _finish("qa", bindings, ctx.source_numbers)


def render_summary_prompt(
    info: BasicInfo,
    question: TcfdQuestion,
    ctx: ContextWindow,
    guidelines: GuidelineList,
    answer_length: int = DEFAULT_ANSWER_LENGTH,
) -> RenderedPrompt:
    bindings = {
        "critical_element": question.recommendation_text,
        "basic_info": info.block(),
        "context": ctx.formatted_text,
        "guidelines": render_guideline_block(guidelines, answer_length, question_index=question.index),
    }
    return _finish("summarization", bindings, ctx.source_numbers)


def render_conformity_prompt(
    question: TcfdQuestion,
    requirements: str,
    disclosure: str,
    sources: Sequence[int] = (),
) -> RenderedPrompt:
    bindings = {
        "critical_element": question.recommendation_text,
        "requirements": requirements,
        "disclosure": disclosure,
    }
    return _finish("conformity", bindings, sources)


def render_cqa_prompt(
    info: BasicInfo,
    user_question: str,
    ctx: ContextWindow,
    guidelines: GuidelineList,
    answer_length: int = DEFAULT_ANSWER_LENGTH,
) -> RenderedPrompt:
    if not user_question.strip():
        raise MissingBinding("user question is empty", stage="prompt")
    bindings = {
        "basic_info": info.block(),
        "question": user_question,
        "context": ctx.formatted_text,
        "guidelines": render_guideline_block(guidelines, answer_length, cqa=True),
    }
    return _finish("cqa", bindings, ctx.source_numbers)


def render_prompt_engineering_prompt(
    original_prompt: str,
    guideline_block: str,
    old_response: str,
    feedback: str,
) -> RenderedPrompt:
    bindings = {
        "original_prompt": original_prompt,
        "guideline_list": guideline_block,
        "old_response": old_response,
        "feedback": feedback,
    }
    return _finish("prompt_engineering", bindings, ())


def render_basic_info_prompt(ctx: ContextWindow) -> RenderedPrompt:
    return _finish("basic_info", {"context": ctx.formatted_text}, ctx.source_numbers)


def skeleton_text(template_id: str, bindings: Mapping[str, str]) -> str:
    """The prompt with the context placeholder left empty.

    Used to estimate the non-context token overhead before retrieval trims
    the context block to the budget.
    """
    full = dict(bindings)
    full["context"] = ""
    full.setdefault("disclosure", "")
    return _substitute(load_template(template_id), full, allow_empty=frozenset({"context", "disclosure"}))


# --- packaged data ---

def _data_text(name: str) -> str:
    return resources.files("tcfdlens.data").joinpath(name).read_text("utf-8")


def load_seed_guidelines() -> GuidelineList:
    return GuidelineList.from_json_obj(json.loads(_data_text("guidelines.json")))


def load_questions(guidelines: GuidelineList | None = None) -> list[TcfdQuestion]:
    """The eleven review questions, with each one's specific guideline taken
    from the given guideline list (seed list when omitted)."""
    glist = guidelines if guidelines is not None else load_seed_guidelines()
    questions = []
    for obj in json.loads(_data_text("questions.json")):
        entry = glist.specific.get(obj["index"])
        questions.append(
            TcfdQuestion(
                index=obj["index"],
                category=obj["category"],
                question_text=obj["question"],
                recommendation_text=obj["recommendation"],
                specific_guideline=entry.text if entry else "",
            )
        )
    return questions


def load_requirements() -> dict[int, str]:
    """Editable per-question requirement texts for conformity scoring."""
    raw = json.loads(_data_text("requirements.json"))
    return {int(k): v for k, v in raw.items() if not k.startswith("_")}
