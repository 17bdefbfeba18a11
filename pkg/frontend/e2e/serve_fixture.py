"""Deterministic service instance for the UI end-to-end tests.

Starts the analysis service on a throwaway workspace with a rule-driven
offline model: every review question gets a fixed score (averaging 61.36),
the first answer quotes a passage that exists verbatim in the fixture
report, and guideline rewrites return a fixed instruction. Anything not
matched by a rule falls through to the standard mock responder.

Usage: python3 serve_fixture.py [port]
"""

import json
import sys
import tempfile

import uvicorn

from tcfdlens.config import AppConfig
from tcfdlens.embeddings import HashEmbeddingBackend
from tcfdlens.gateway import ScriptedLlmBackend, default_mock_responder
from tcfdlens.prompts import load_questions
from tcfdlens.service import create_app
from tcfdlens.storage import Workspace

SCORES = [60, 60, 70, 60, 70, 50, 90, 70, 50, 75, 20]

QUOTED = (
    "the board of directors oversees climate-related risks and opportunities "
    "through its audit committee"
)


def scripted_backend() -> ScriptedLlmBackend:
    rules = [
        (
            "<Expert Feedback>",
            json.dumps({"GUIDELINE": "Always state the reporting cadence for each disclosure."}),
        ),
        (
            "COMPANY_NAME",
            json.dumps(
                {
                    "COMPANY_NAME": "Northwind Logistics",
                    "LOCATION": "Rotterdam, Netherlands",
                    "SECTOR": "Transportation",
                }
            ),
        ),
    ]
    for question, score in zip(load_questions(), SCORES):
        if question.index == 1:
            answer = f'The report states that "{QUOTED}" and reviews progress annually.'
        else:
            answer = f"The report addresses point {question.index} with cited extracts."
        rules.append((question.question_text, json.dumps({"ANSWER": answer, "SOURCES": [0, 1]})))
        rules.append(
            (question.recommendation_text, json.dumps({"ANALYSIS": "Requirements are partially met.", "SCORE": score}))
        )
    return ScriptedLlmBackend(rules=rules, default=default_mock_responder)


def main() -> None:
    port = int(sys.argv[1]) if len(sys.argv) > 1 else 8977
    workspace_dir = tempfile.mkdtemp(prefix="ui-e2e-")
    config = AppConfig(workspace=workspace_dir, embed_dim=16)
    app = create_app(
        config,
        Workspace(workspace_dir),
        llm=scripted_backend(),
        embedder=HashEmbeddingBackend(16),
    )
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()
