"""Expert feedback records and guideline evolution.

Reviewers leave feedback on specific answers; a model call rewrites each
piece of feedback into a reusable guideline, which is appended to the
guideline list as a draft. Drafts only take effect in prompts once promoted.
Every store mutation produces a new version; history is append-only.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

from .errors import CompanySpecificGuideline, Conflict, InvalidTransition, NotFound, TcfdLensError
from .gateway import CompletionParams, LlmBackend, complete, parse_guideline_json
from .prompts import (
    GuidelineEntry,
    GuidelineList,
    load_seed_guidelines,
    render_guideline_block,
    render_prompt_engineering_prompt,
)

FEEDBACK_STATUSES = ("pending", "transformed", "archived")
_ALLOWED_TRANSITIONS = {("pending", "transformed"), ("pending", "archived")}


@dataclass(frozen=True)
class FeedbackRecord:
    feedback_id: str
    answer_id: str
    expert_id: str
    feedback_text: str
    created_at: str
    question_index: int | None = None
    status: str = "pending"

    def to_json_obj(self) -> dict:
        return {
            "feedback_id": self.feedback_id,
            "answer_id": self.answer_id,
            "expert_id": self.expert_id,
            "feedback_text": self.feedback_text,
            "created_at": self.created_at,
            "question_index": self.question_index,
            "status": self.status,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "FeedbackRecord":
        return cls(
            feedback_id=obj["feedback_id"],
            answer_id=obj["answer_id"],
            expert_id=obj["expert_id"],
            feedback_text=obj["feedback_text"],
            created_at=obj["created_at"],
            question_index=obj.get("question_index"),
            status=obj.get("status", "pending"),
        )


@dataclass
class PromptLabDeps:
    llm: LlmBackend
    params: CompletionParams = None  # type: ignore[assignment]
    company_name: str | None = None  # guards against company-specific guidelines

    def __post_init__(self):
        if self.params is None:
            self.params = CompletionParams()


def feedback_to_guideline(
    fb: FeedbackRecord,
    current: GuidelineList,
    original_prompt: str,
    old_response: str,
    deps: PromptLabDeps,
) -> str:
    """Turn one piece of expert feedback into a general guideline.

    The guideline must not mention the company under review; a transform
    that leaks the company name is rejected rather than stored.
    """
    guideline_block = render_guideline_block(current)
    prompt = render_prompt_engineering_prompt(
        original_prompt=original_prompt,
        guideline_block=guideline_block,
        old_response=old_response,
        feedback=fb.feedback_text,
    )
    raw = complete(prompt.text, deps.params, deps.llm)
    try:
        guideline = parse_guideline_json(raw)
    except TcfdLensError as exc:
        raise exc.with_stage("transform")

    name = (deps.company_name or "").strip()
    if name and name.lower() != "unknown" and name.lower() in guideline.lower():
        raise CompanySpecificGuideline(
            f"generated guideline mentions the company under review ({name})", stage="transform"
        )
    return guideline


def append_guideline(
    current: GuidelineList,
    guideline_text: str,
    scope: str = "general",
    question_index: int | None = None,
    origin: str = "feedback",
    status: str = "draft",
) -> GuidelineList:
    """A new guideline list with the entry added and the version bumped.

    General guidelines keep contiguous numbering by storing unnumbered text;
    a specific guideline replaces the question's existing entry.
    """
    entry = GuidelineEntry(
        text=guideline_text,
        origin=origin,
        status=status,
        added_version=current.version + 1,
    )
    if scope == "general":
        return GuidelineList(
            version=current.version + 1,
            general=current.general + (entry,),
            specific=dict(current.specific),
        )
    if scope == "specific":
        if question_index is None:
            raise ValueError("specific scope requires a question_index")
        specific = dict(current.specific)
        specific[question_index] = entry
        return GuidelineList(
            version=current.version + 1,
            general=current.general,
            specific=specific,
        )
    raise ValueError(f"scope must be 'general' or 'specific', got {scope!r}")


def promote_guidelines(current: GuidelineList, version: int) -> GuidelineList:
    """Activate the draft entries introduced at the given version."""
    drafts = [
        e for e in list(current.general) + list(current.specific.values())
        if e.status == "draft" and e.added_version == version
    ]
    if not any(
        e.added_version == version
        for e in list(current.general) + list(current.specific.values())
    ):
        raise NotFound(f"no guideline entries were added at version {version}")
    if not drafts:
        raise Conflict(f"version {version} has no draft entries left to promote")

    def activate(entry: GuidelineEntry) -> GuidelineEntry:
        if entry.status == "draft" and entry.added_version == version:
            return replace(entry, status="active")
        return entry

    return GuidelineList(
        version=current.version + 1,
        general=tuple(activate(e) for e in current.general),
        specific={k: activate(v) for k, v in current.specific.items()},
    )


class GuidelineStore:
    """Versioned guideline list on disk. Every mutation snapshots the prior
    state into history, so any version can be reconstructed."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def load(self) -> GuidelineList:
        if not self.path.exists():
            return load_seed_guidelines()
        obj = json.loads(self.path.read_text("utf-8"))
        return GuidelineList.from_json_obj(obj)

    def _load_history(self) -> list[dict]:
        if not self.path.exists():
            return []
        return json.loads(self.path.read_text("utf-8")).get("history", [])

    def save(self, new_list: GuidelineList) -> None:
        current = self.load()
        history = self._load_history()
        if new_list.version <= current.version and self.path.exists():
            raise Conflict(
                f"guideline version must move forward: {current.version} -> {new_list.version}"
            )
        if self.path.exists():
            snapshot = current.to_json_obj()
            snapshot.pop("history", None)
            history.append(snapshot)
        payload = new_list.to_json_obj()
        payload["history"] = history
        tmp = self.path.with_name(self.path.name + ".tmp")
        tmp.write_text(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True), "utf-8")
        tmp.replace(self.path)


class FeedbackStore:
    """Append-only JSON-lines store; the last line per feedback id wins."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def record_feedback(
        self,
        answer_id: str,
        expert_id: str,
        feedback_text: str,
        question_index: int | None = None,
    ) -> FeedbackRecord:
        record = FeedbackRecord(
            feedback_id=uuid.uuid4().hex[:12],
            answer_id=answer_id,
            expert_id=expert_id,
            feedback_text=feedback_text,
            created_at=datetime.now(timezone.utc).isoformat(),
            question_index=question_index,
        )
        self._append(record)
        return record

    def _append(self, record: FeedbackRecord) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.to_json_obj(), ensure_ascii=False, sort_keys=True) + "\n")

    def list_feedback(self, status: str | None = None) -> list[FeedbackRecord]:
        records = list(self._fold().values())
        if status is not None:
            records = [r for r in records if r.status == status]
        return sorted(records, key=lambda r: r.created_at)

    def get(self, feedback_id: str) -> FeedbackRecord:
        record = self._fold().get(feedback_id)
        if record is None:
            raise NotFound(f"feedback {feedback_id!r} does not exist")
        return record

    def set_status(self, feedback_id: str, new_status: str) -> FeedbackRecord:
        record = self.get(feedback_id)
        if (record.status, new_status) not in _ALLOWED_TRANSITIONS:
            raise InvalidTransition(
                f"feedback {feedback_id!r} cannot move from {record.status!r} to {new_status!r}"
            )
        updated = replace(record, status=new_status)
        self._append(updated)
        return updated

    def _fold(self) -> dict[str, FeedbackRecord]:
        records: dict[str, FeedbackRecord] = {}
        if not self.path.exists():
            return records
        for line in self.path.read_text("utf-8").splitlines():
            if line.strip():
                record = FeedbackRecord.from_json_obj(json.loads(line))
                records[record.feedback_id] = record
        return records
