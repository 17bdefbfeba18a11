"""HTTP service: upload and analysis jobs, questions, evidence, and the
feedback loop, all against the deterministic offline backends."""

import json
import time

import pytest
from fastapi.testclient import TestClient

from helpers import SCORE_SETS, corpus_text, scripted_review_backend
from tcfdlens.config import AppConfig
from tcfdlens.embeddings import HashEmbeddingBackend
from tcfdlens.gateway import ScriptedLlmBackend, default_mock_responder
from tcfdlens.service import create_app
from tcfdlens.storage import Workspace

GUIDELINE_TEXT = "Always state the reporting cadence."
TRANSFORM_RULE = ("<Expert Feedback>", json.dumps({"GUIDELINE": GUIDELINE_TEXT}))


def service_backend(scores=None, **kwargs):
    scores = scores if scores is not None else SCORE_SETS["set_a"][0]
    return scripted_review_backend(
        scores, extra_rules=[TRANSFORM_RULE], default=default_mock_responder, **kwargs
    )


def make_env(tmp_path, llm=None, **config_overrides):
    config = AppConfig(
        workspace=str(tmp_path / "ws"), embed_dim=16, max_workers=1, **config_overrides
    )
    workspace = Workspace(config.workspace)
    app = create_app(
        config, workspace=workspace, llm=llm or service_backend(), embedder=HashEmbeddingBackend(16)
    )
    return TestClient(app), workspace


def wait_job(client, job_id, timeout=15.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        body = client.get(f"/jobs/{job_id}").json()
        if body["state"] in ("partial", "complete", "failed"):
            return body
        time.sleep(0.01)
    raise AssertionError(f"job {job_id} did not settle in time")


def upload_and_index(client, text=None, **params):
    response = client.post("/reports", content=text or corpus_text(), params=params)
    assert response.status_code == 202
    body = response.json()
    job = wait_job(client, body["job_id"])
    assert job["state"] == "complete"
    return body["doc_id"]


def run_analysis(client, doc_id):
    response = client.post(f"/reports/{doc_id}/analyze")
    assert response.status_code == 202
    job = wait_job(client, response.json()["job_id"])
    assert job["state"] in ("partial", "complete")
    return job


class TestHealth:
    def test_healthz(self, tmp_path):
        client, _ = make_env(tmp_path)
        body = client.get("/healthz").json()
        assert body == {"status": "ok", "mock_backend": True}


class TestUpload:
    def test_upload_indexes_the_report(self, tmp_path):
        client, workspace = make_env(tmp_path)
        doc_id = upload_and_index(client, title="Annual Report")
        assert len(doc_id) == 16
        assert workspace.has_index(doc_id)
        listing = client.get("/reports").json()["reports"]
        assert len(listing) == 1
        assert listing[0]["doc_id"] == doc_id
        assert listing[0]["has_index"] is True
        assert listing[0]["metadata"] == {"title": "Annual Report"}
        assert listing[0]["latest_average"] is None

    def test_same_content_maps_to_the_same_id(self, tmp_path):
        client, _ = make_env(tmp_path)
        first = upload_and_index(client)
        second = upload_and_index(client)
        assert first == second
        assert len(client.get("/reports").json()["reports"]) == 1

    def test_empty_body(self, tmp_path):
        client, _ = make_env(tmp_path)
        response = client.post("/reports", content=b"")
        assert response.status_code == 400
        body = response.json()
        assert body["code"] == "empty_document"
        assert set(body) == {"code", "message", "stage"}

    def test_unknown_format(self, tmp_path):
        client, _ = make_env(tmp_path)
        response = client.post("/reports", content=b"text", params={"format": "docx"})
        assert response.status_code == 400
        assert response.json()["code"] == "unsupported_format"


class TestAnalysisJobs:
    def test_full_run_scores_the_eleven_points(self, tmp_path):
        client, _ = make_env(tmp_path)
        doc_id = upload_and_index(client)
        job = run_analysis(client, doc_id)
        assert job["state"] == "complete"
        assert job["progress"] == {"done": 11, "total": 11}
        assert job["result_key"]

        body = client.get(f"/reports/{doc_id}/analysis").json()
        assert body["status"] == "complete"
        assert body["average_score"] == 61.36
        assert sorted(body["answers"], key=int) == [str(i) for i in range(1, 12)]
        assert sorted(body["conformity"], key=int) == [str(i) for i in range(1, 12)]
        assert body["basic_info"]["company_name"] == "Northwind Logistics"
        assert body["errors"] == []
        answer = body["answers"]["1"]
        assert answer["sources"] == [0, 1]
        assert "point 1" in answer["answer"]

        listing = client.get("/reports").json()["reports"]
        assert listing[0]["latest_average"] == 61.36

    def test_partial_run_is_stored_and_flagged(self, tmp_path):
        client, _ = make_env(tmp_path, llm=service_backend(skip_answer_for={5}))
        doc_id = upload_and_index(client)
        job = run_analysis(client, doc_id)
        assert job["state"] == "partial"
        body = client.get(f"/reports/{doc_id}/analysis").json()
        assert body["status"] == "partial"
        assert "5" not in body["answers"]
        assert body["errors"][0]["question_index"] == 5
        assert body["errors"][0]["stage"] == "answer"

    def test_failed_run_reports_the_error(self, tmp_path):
        broken = ScriptedLlmBackend(rules=[("", "never valid json")])
        client, _ = make_env(tmp_path, llm=broken)
        doc_id = upload_and_index(client)
        response = client.post(f"/reports/{doc_id}/analyze")
        job = wait_job(client, response.json()["job_id"])
        assert job["state"] == "failed"
        assert job["error"]["code"] == "analysis_failed"
        assert client.get(f"/reports/{doc_id}/analysis").status_code == 404

    def test_analyze_requires_a_known_document(self, tmp_path):
        client, _ = make_env(tmp_path)
        response = client.post("/reports/0123456789abcdef/analyze")
        assert response.status_code == 404
        assert response.json()["code"] == "not_found"

    def test_analyze_requires_an_index(self, tmp_path):
        from tcfdlens.ingestion import load_document

        client, workspace = make_env(tmp_path)
        doc = load_document(corpus_text(), fmt="plain_text")
        workspace.put_document(doc)
        response = client.post(f"/reports/{doc.doc_id}/analyze")
        assert response.status_code == 409
        assert response.json()["code"] == "conflict"

    def test_concurrent_requests_share_one_job(self, tmp_path):
        class SlowBackend:
            def __init__(self, inner):
                self.inner = inner

            def complete(self, prompt_text, params):
                time.sleep(0.02)
                return self.inner.complete(prompt_text, params)

        client, _ = make_env(tmp_path, llm=SlowBackend(service_backend()))
        doc_id = upload_and_index(client)
        first = client.post(f"/reports/{doc_id}/analyze").json()
        second = client.post(f"/reports/{doc_id}/analyze").json()
        assert first["job_id"] == second["job_id"]
        wait_job(client, first["job_id"])
        third = client.post(f"/reports/{doc_id}/analyze").json()
        assert third["job_id"] != first["job_id"]
        wait_job(client, third["job_id"])

    def test_unknown_job(self, tmp_path):
        client, _ = make_env(tmp_path)
        assert client.get("/jobs/unknown").status_code == 404

    def test_analysis_before_any_run(self, tmp_path):
        client, _ = make_env(tmp_path)
        doc_id = upload_and_index(client)
        assert client.get(f"/reports/{doc_id}/analysis").status_code == 404


class TestQuestions:
    def test_free_form_question(self, tmp_path):
        client, _ = make_env(tmp_path)
        doc_id = upload_and_index(client)
        response = client.post(
            f"/reports/{doc_id}/questions",
            json={"question": "What are the main climate risks the company faces?"},
        )
        assert response.status_code == 200
        body = response.json()
        assert body["answer"].startswith("According to the report,")
        assert body["kind"] == "answer"
        assert body["sources"] and all(isinstance(s, int) for s in body["sources"])
        assert body["pages"] and all(isinstance(p, int) for p in body["pages"])
        assert body["answer_id"].startswith(f"{doc_id}:cqa:")
        assert body["question"] == "What are the main climate risks the company faces?"

    def test_blank_question(self, tmp_path):
        client, _ = make_env(tmp_path)
        doc_id = upload_and_index(client)
        response = client.post(f"/reports/{doc_id}/questions", json={"question": "  "})
        assert response.status_code == 400
        assert response.json()["code"] == "missing_binding"

    def test_unknown_document(self, tmp_path):
        client, _ = make_env(tmp_path)
        response = client.post(
            "/reports/0123456789abcdef/questions", json={"question": "anything?"}
        )
        assert response.status_code == 404


class TestEvidence:
    def test_fragment_lookup(self, tmp_path):
        client, _ = make_env(tmp_path)
        doc_id = upload_and_index(client)
        response = client.get(
            f"/reports/{doc_id}/evidence", params={"fragment": "board of directors oversees"}
        )
        assert response.status_code == 200
        body = response.json()
        assert body["fragment"] == "board of directors oversees"
        assert body["matches"]
        match = body["matches"][0]
        assert set(match) == {"source", "page", "start", "end", "text", "chunk_text"}
        assert match["chunk_text"][match["start"] : match["end"]] == match["text"]

    def test_short_fragment(self, tmp_path):
        client, _ = make_env(tmp_path)
        doc_id = upload_and_index(client)
        response = client.get(f"/reports/{doc_id}/evidence", params={"fragment": "ab"})
        assert response.status_code == 400
        assert response.json()["code"] == "fragment_too_short"

    def test_unknown_document(self, tmp_path):
        client, _ = make_env(tmp_path)
        response = client.get(
            "/reports/0123456789abcdef/evidence", params={"fragment": "board"}
        )
        assert response.status_code == 404


class TestFeedbackLoop:
    def test_feedback_transform_promote_cycle(self, tmp_path):
        client, _ = make_env(tmp_path)
        doc_id = upload_and_index(client)
        run_analysis(client, doc_id)

        created = client.post(
            "/feedback",
            json={
                "answer_id": f"{doc_id}:q1",
                "feedback_text": "Please mention the reporting cadence.",
                "expert_id": "expert-a",
                "question_index": 1,
            },
        )
        assert created.status_code == 201
        feedback_id = created.json()["feedback_id"]
        assert created.json()["status"] == "pending"

        listed = client.get("/feedback", params={"status": "pending"}).json()["feedback"]
        assert [r["feedback_id"] for r in listed] == [feedback_id]

        transformed = client.post(f"/guidelines/transform/{feedback_id}")
        assert transformed.status_code == 200
        assert transformed.json() == {
            "guideline": GUIDELINE_TEXT,
            "version": 2,
            "scope": "general",
            "status": "draft",
        }
        assert client.get("/feedback", params={"status": "transformed"}).json()["feedback"]

        guidelines = client.get("/guidelines").json()
        assert guidelines["version"] == 2
        drafts = [e for e in guidelines["general"] if e["status"] == "draft"]
        assert [e["text"] for e in drafts] == [GUIDELINE_TEXT]

        promoted = client.post("/guidelines/promote/2")
        assert promoted.status_code == 200
        assert promoted.json()["version"] == 3
        active = [e for e in promoted.json()["general"] if e["text"] == GUIDELINE_TEXT]
        assert active[0]["status"] == "active"

    def test_specific_scope_uses_the_feedback_question(self, tmp_path):
        client, _ = make_env(tmp_path)
        doc_id = upload_and_index(client)
        run_analysis(client, doc_id)
        feedback_id = client.post(
            "/feedback",
            json={
                "answer_id": f"{doc_id}:q9",
                "feedback_text": "Ask for absolute emission numbers.",
                "question_index": 9,
            },
        ).json()["feedback_id"]
        body = client.post(
            f"/guidelines/transform/{feedback_id}", json={"scope": "specific"}
        ).json()
        assert body["scope"] == "specific"
        guidelines = client.get("/guidelines").json()
        assert guidelines["specific"]["9"]["text"] == GUIDELINE_TEXT
        assert guidelines["specific"]["9"]["status"] == "draft"

    def test_feedback_on_a_free_form_answer(self, tmp_path):
        client, _ = make_env(tmp_path)
        doc_id = upload_and_index(client)
        answer_id = client.post(
            f"/reports/{doc_id}/questions", json={"question": "What are the key climate risks?"}
        ).json()["answer_id"]
        feedback_id = client.post(
            "/feedback", json={"answer_id": answer_id, "feedback_text": "Quote the page."}
        ).json()["feedback_id"]
        assert client.post(f"/guidelines/transform/{feedback_id}").status_code == 200

    def test_transform_is_single_shot(self, tmp_path):
        client, _ = make_env(tmp_path)
        doc_id = upload_and_index(client)
        run_analysis(client, doc_id)
        feedback_id = client.post(
            "/feedback", json={"answer_id": f"{doc_id}:q1", "feedback_text": "More detail."}
        ).json()["feedback_id"]
        assert client.post(f"/guidelines/transform/{feedback_id}").status_code == 200
        second = client.post(f"/guidelines/transform/{feedback_id}")
        assert second.status_code == 409
        assert second.json()["code"] == "invalid_transition"

    def test_transform_unknown_feedback(self, tmp_path):
        client, _ = make_env(tmp_path)
        assert client.post("/guidelines/transform/nope").status_code == 404

    def test_transform_unresolvable_answer(self, tmp_path):
        client, _ = make_env(tmp_path)
        feedback_id = client.post(
            "/feedback", json={"answer_id": "mystery-answer", "feedback_text": "hm"}
        ).json()["feedback_id"]
        assert client.post(f"/guidelines/transform/{feedback_id}").status_code == 404

    def test_feedback_requires_fields(self, tmp_path):
        client, _ = make_env(tmp_path)
        assert client.post("/feedback", json={"feedback_text": "x"}).status_code == 400
        assert client.post("/feedback", json={"answer_id": "a"}).status_code == 400

    def test_promote_without_drafts(self, tmp_path):
        client, _ = make_env(tmp_path)
        response = client.post("/guidelines/promote/1")
        assert response.status_code == 409
        assert client.post("/guidelines/promote/99").status_code == 404

    def test_seed_guidelines_exposed(self, tmp_path):
        client, _ = make_env(tmp_path)
        body = client.get("/guidelines").json()
        assert body["version"] == 1
        assert len(body["general"]) == 7
        assert sorted(body["specific"], key=int) == [str(i) for i in range(1, 12)]


class TestAuthAndLimits:
    def test_api_key_required_when_configured(self, tmp_path):
        client, _ = make_env(tmp_path, api_key="sekret")
        denied = client.get("/reports")
        assert denied.status_code == 401
        assert denied.json()["code"] == "unauthorized"
        allowed = client.get("/reports", headers={"x-api-key": "sekret"})
        assert allowed.status_code == 200
        assert client.get("/healthz").status_code == 200

    def test_job_limit(self, tmp_path):
        client, _ = make_env(tmp_path, max_jobs=0)
        response = client.post("/reports", content=corpus_text())
        assert response.status_code == 503
        assert response.json()["code"] == "busy"
