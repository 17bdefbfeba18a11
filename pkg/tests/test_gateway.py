"""Backend calling, scripted responses, and structured-output parsing."""

import json
import random
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from tcfdlens.embeddings import HttpEmbeddingBackend
from tcfdlens.errors import (
    BackendTimeout,
    BackendUnavailable,
    DimensionMismatch,
    MalformedOutput,
    MissingKey,
    RateLimited,
    ScoreOutOfRange,
)
from tcfdlens.gateway import (
    CompletionParams,
    HttpChatBackend,
    ModelAnswer,
    ScriptedLlmBackend,
    complete,
    default_mock_responder,
    extract_json_object,
    parse_answer_json,
    parse_conformity_json,
    parse_guideline_json,
    prompt_fingerprint,
    serialize_answer,
    serialize_conformity,
)


class FlakyBackend:
    """Fails the first n calls, then answers."""

    def __init__(self, failures: int, exc: Exception | None = None):
        self.failures = failures
        self.exc = exc or BackendUnavailable("backend down", stage="complete")
        self.calls = 0

    def complete(self, prompt_text, params):
        self.calls += 1
        if self.calls <= self.failures:
            raise self.exc
        return "ok"


class TestCompleteRetries:
    def test_transient_failures_are_retried(self):
        backend = FlakyBackend(failures=2)
        delays = []
        params = CompletionParams(max_retries=3, retry_backoff=0.5)
        assert complete("p", params, backend, sleep=delays.append) == "ok"
        assert backend.calls == 3
        assert delays == [0.5, 1.0]

    def test_rate_limit_is_retried(self):
        backend = FlakyBackend(failures=1, exc=RateLimited("slow down", stage="complete"))
        assert complete("p", CompletionParams(retry_backoff=0), backend, sleep=lambda d: None) == "ok"
        assert backend.calls == 2

    def test_zero_backoff_never_sleeps(self):
        backend = FlakyBackend(failures=3)
        slept = []
        assert complete("p", CompletionParams(max_retries=3, retry_backoff=0), backend, sleep=slept.append) == "ok"
        assert slept == []

    def test_retries_exhausted(self):
        backend = FlakyBackend(failures=99)
        with pytest.raises(BackendUnavailable):
            complete("p", CompletionParams(max_retries=2, retry_backoff=0), backend, sleep=lambda d: None)
        assert backend.calls == 3

    def test_max_retries_zero_fails_fast(self):
        backend = FlakyBackend(failures=1)
        with pytest.raises(BackendUnavailable):
            complete("p", CompletionParams(max_retries=0), backend, sleep=lambda d: None)
        assert backend.calls == 1

    def test_non_transient_errors_are_not_retried(self):
        backend = FlakyBackend(failures=5, exc=MalformedOutput("bad", stage="parse"))
        with pytest.raises(MalformedOutput):
            complete("p", CompletionParams(max_retries=3, retry_backoff=0), backend, sleep=lambda d: None)
        assert backend.calls == 1


class TestScriptedBackend:
    def test_fingerprint_is_sixteen_hex_chars(self):
        fp = prompt_fingerprint("hello")
        assert len(fp) == 16
        assert int(fp, 16) >= 0
        assert fp != prompt_fingerprint("hello!")

    def test_exact_match_beats_rules_and_default(self):
        backend = ScriptedLlmBackend(
            rules=[("hello", "from rule")],
            default=lambda p: "from default",
        )
        backend.add("hello world", "from script")
        assert backend.complete("hello world", CompletionParams()) == "from script"
        assert backend.complete("hello there", CompletionParams()) == "from rule"
        assert backend.complete("nothing matches", CompletionParams()) == "from default"
        assert backend.calls == 3

    def test_first_matching_rule_wins(self):
        backend = ScriptedLlmBackend(rules=[("alpha", "one"), ("alph", "two")])
        assert backend.complete("alphabet", CompletionParams()) == "one"

    def test_unmatched_prompt_raises(self):
        backend = ScriptedLlmBackend()
        with pytest.raises(BackendUnavailable) as exc_info:
            backend.complete("mystery", CompletionParams())
        assert prompt_fingerprint("mystery") in str(exc_info.value)

    def test_script_file_round_trip(self, tmp_path):
        backend = ScriptedLlmBackend()
        backend.add("prompt one", "response one")
        backend.add("prompt two", "response two")
        path = tmp_path / "script.json"
        backend.save(path)
        replayed = ScriptedLlmBackend.from_file(path)
        assert replayed.complete("prompt one", CompletionParams()) == "response one"
        assert replayed.complete("prompt two", CompletionParams()) == "response two"


class TestDefaultMockResponder:
    def test_same_prompt_same_bytes(self):
        prompt = "Content: alpha beta\nSource: 3\n"
        assert default_mock_responder(prompt) == default_mock_responder(prompt)

    def test_answer_branch_echoes_first_extract(self):
        prompt = (
            "Content: alpha beta gamma\nSource: 3\n\n"
            "Content: delta\nSource: 7\n\n"
            "Content: epsilon\nSource: 9\n"
        )
        answer = parse_answer_json(default_mock_responder(prompt))
        assert answer.answer_text == "According to the report, alpha beta gamma"
        assert answer.citation_order == (3, 7)
        assert answer.kind == "answer"

    def test_summary_branch(self):
        prompt = "1. SUMMARY: ...\nContent: alpha\nSource: 2\n"
        answer = parse_answer_json(default_mock_responder(prompt))
        assert answer.kind == "summary"

    def test_conformity_branch_scores_from_fingerprint(self):
        prompt = "Assess this.\n2. SCORE: a number\nDisclosure: text"
        result = parse_conformity_json(default_mock_responder(prompt), question_index=4)
        assert result.score == int(prompt_fingerprint(prompt), 16) % 101
        assert result.analysis

    def test_company_branch_admits_ignorance(self):
        obj = json.loads(default_mock_responder('Return JSON with "COMPANY_NAME".'))
        assert obj == {"COMPANY_NAME": "unknown", "LOCATION": "unknown", "SECTOR": "unknown"}

    def test_guideline_branch_quotes_the_feedback(self):
        prompt = '"GUIDELINE" please.\n3. <Expert Feedback>: "Cover the board angle."\nRest.'
        guideline = parse_guideline_json(default_mock_responder(prompt))
        assert guideline == "In every answer, address the following review point: Cover the board angle."

    def test_no_extract_fallback(self):
        answer = parse_answer_json(default_mock_responder("hello"))
        assert answer.answer_text == "According to the report, No extract was provided."
        assert answer.citation_order == ()


class TestExtractJsonObject:
    def test_bare_object(self):
        assert extract_json_object('{"a": 1}') == {"a": 1}

    def test_object_inside_prose(self):
        assert extract_json_object('Sure! Here it is: {"a": 1}. Anything else?') == {"a": 1}

    def test_fenced_block_wins_over_earlier_prose(self):
        raw = 'The schema is {"example": true} but the answer is:\n```json\n{"a": 2}\n```'
        assert extract_json_object(raw) == {"a": 2}

    def test_unlabelled_fence(self):
        assert extract_json_object('```\n{"a": 3}\n```') == {"a": 3}

    def test_nested_objects_return_the_outer_one(self):
        assert extract_json_object('{"a": {"b": {"c": 1}}}') == {"a": {"b": {"c": 1}}}

    def test_braces_inside_strings(self):
        raw = '{"text": "set {x} to \\"y\\" } done", "n": 1}'
        assert extract_json_object(raw) == {"text": 'set {x} to "y" } done', "n": 1}

    def test_skips_unparseable_balanced_spans(self):
        assert extract_json_object("{not json} then {\"k\": 1}") == {"k": 1}

    def test_no_object_anywhere(self):
        with pytest.raises(MalformedOutput):
            extract_json_object("I could not find anything relevant.")

    def test_unbalanced_braces(self):
        with pytest.raises(MalformedOutput):
            extract_json_object('{"a": 1')


class TestParseAnswer:
    def test_happy_path(self):
        answer = parse_answer_json('{"ANSWER": "Board oversight exists.", "SOURCES": [5, 2, 5, 9, 2]}')
        assert answer.answer_text == "Board oversight exists."
        assert answer.kind == "answer"
        assert answer.citation_order == (5, 2, 9)
        assert answer.cited_sources == (2, 5, 9)
        assert answer.citation_warnings == ()

    def test_summary_key(self):
        answer = parse_answer_json('{"SUMMARY": "text", "SOURCES": []}')
        assert answer.kind == "summary"
        assert answer.cited_sources == ()

    def test_answer_key_wins_when_both_present(self):
        answer = parse_answer_json('{"ANSWER": "a", "SUMMARY": "s", "SOURCES": [1]}')
        assert answer.kind == "answer"
        assert answer.answer_text == "a"

    def test_missing_both_keys(self):
        with pytest.raises(MissingKey):
            parse_answer_json('{"SOURCES": [1]}')

    def test_empty_or_non_string_answer(self):
        with pytest.raises(MissingKey):
            parse_answer_json('{"ANSWER": "   ", "SOURCES": [1]}')
        with pytest.raises(MissingKey):
            parse_answer_json('{"ANSWER": 5, "SOURCES": [1]}')

    def test_missing_sources(self):
        with pytest.raises(MissingKey):
            parse_answer_json('{"ANSWER": "a"}')

    def test_scalar_sources_coerced_to_list(self):
        assert parse_answer_json('{"ANSWER": "a", "SOURCES": 3}').cited_sources == (3,)
        assert parse_answer_json('{"ANSWER": "a", "SOURCES": "4"}').cited_sources == (4,)

    def test_non_list_sources(self):
        with pytest.raises(MalformedOutput):
            parse_answer_json('{"ANSWER": "a", "SOURCES": {"n": 1}}')

    def test_source_coercion_rules(self):
        answer = parse_answer_json(
            '{"ANSWER": "a", "SOURCES": [7, "8", 9.0, true, 4.5, "ten", null, " 12 "]}'
        )
        assert answer.citation_order == (7, 8, 9, 12)
        assert len(answer.citation_warnings) == 4

    def test_unknown_sources_dropped_with_warning(self):
        answer = parse_answer_json('{"ANSWER": "a", "SOURCES": [1, 99]}', valid_sources=[1, 2, 3])
        assert answer.cited_sources == (1,)
        assert any("99" in w for w in answer.citation_warnings)

    def test_fenced_payload(self):
        answer = parse_answer_json('Here:\n```json\n{"ANSWER": "a", "SOURCES": [1]}\n```')
        assert answer.cited_sources == (1,)

    def test_raw_text_is_preserved(self):
        raw = 'prose {"ANSWER": "a", "SOURCES": [1]} more'
        assert parse_answer_json(raw).raw == raw


class TestAnswerSerialization:
    def test_round_trip_preserves_citation_order(self):
        first = parse_answer_json('{"ANSWER": "text", "SOURCES": [9, 1, 9, 4]}')
        second = parse_answer_json(serialize_answer(first))
        assert second.citation_order == (9, 1, 4)
        assert second.answer_text == first.answer_text
        assert second.kind == first.kind

    def test_random_payload_round_trips(self):
        rng = random.Random(4242)
        alphabet = 'abcdefgh {}"\\\n\t01234 émoji™ '
        for _ in range(200):
            key = rng.choice(["ANSWER", "SUMMARY"])
            text = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 120))) + "x"
            sources = [rng.randrange(0, 400) for _ in range(rng.randrange(0, 12))]
            first = parse_answer_json(json.dumps({key: text, "SOURCES": sources}))
            second = parse_answer_json(serialize_answer(first))
            assert second.answer_text == first.answer_text
            assert second.kind == first.kind
            assert second.citation_order == first.citation_order
            assert second.cited_sources == first.cited_sources
            assert second.citation_warnings == ()

    def test_model_answer_json_round_trip(self):
        answer = ModelAnswer(
            answer_text="a",
            cited_sources=(2, 5),
            raw='{"ANSWER": "a", "SOURCES": [5, 2]}',
            kind="answer",
            citation_order=(5, 2),
            citation_warnings=("discarded source 99: not in the report index",),
            pages=(12, 4),
        )
        again = ModelAnswer.from_json_obj(json.loads(json.dumps(answer.to_json_obj())))
        assert again == answer

    def test_model_answer_json_defaults(self):
        again = ModelAnswer.from_json_obj({"answer": "a", "sources": [1, 2]})
        assert again.citation_order == (1, 2)
        assert again.pages is None
        assert again.kind == "answer"


class TestParseConformity:
    def test_happy_path(self):
        result = parse_conformity_json('{"ANALYSIS": "Meets most points.", "SCORE": 85}', question_index=3)
        assert result.question_index == 3
        assert result.score == 85
        assert result.analysis == "Meets most points."
        assert result.word_limit_exceeded is False

    def test_score_coercion(self):
        assert parse_conformity_json('{"ANALYSIS": "a", "SCORE": "85"}', 1).score == 85
        assert parse_conformity_json('{"ANALYSIS": "a", "SCORE": 85.0}', 1).score == 85

    def test_score_rejections(self):
        for bad in ("true", "85.5", '"eighty"', "null", "[85]"):
            with pytest.raises(MalformedOutput):
                parse_conformity_json('{"ANALYSIS": "a", "SCORE": %s}' % bad, 1)

    def test_out_of_range_scores_error_instead_of_clamping(self):
        for bad in (-5, -1, 101, 250):
            with pytest.raises(ScoreOutOfRange) as exc_info:
                parse_conformity_json(json.dumps({"ANALYSIS": "a", "SCORE": bad}), 1)
            assert str(bad) in str(exc_info.value)

    def test_boundary_scores_accepted(self):
        assert parse_conformity_json('{"ANALYSIS": "a", "SCORE": 0}', 1).score == 0
        assert parse_conformity_json('{"ANALYSIS": "a", "SCORE": 100}', 1).score == 100

    def test_missing_keys(self):
        with pytest.raises(MissingKey):
            parse_conformity_json('{"SCORE": 10}', 1)
        with pytest.raises(MissingKey):
            parse_conformity_json('{"ANALYSIS": "a"}', 1)

    def test_non_string_analysis(self):
        with pytest.raises(MalformedOutput):
            parse_conformity_json('{"ANALYSIS": [], "SCORE": 10}', 1)

    def test_word_limit_is_a_soft_flag(self):
        at_limit = " ".join(["word"] * 150)
        over = " ".join(["word"] * 151)
        assert parse_conformity_json(json.dumps({"ANALYSIS": at_limit, "SCORE": 5}), 1).word_limit_exceeded is False
        flagged = parse_conformity_json(json.dumps({"ANALYSIS": over, "SCORE": 5}), 1)
        assert flagged.word_limit_exceeded is True
        assert flagged.score == 5

    def test_serialize_round_trip(self):
        rng = random.Random(7)
        for _ in range(50):
            analysis = " ".join(f"w{rng.randrange(10)}" for _ in range(rng.randrange(1, 200)))
            first = parse_conformity_json(json.dumps({"ANALYSIS": analysis, "SCORE": rng.randrange(101)}), 2)
            second = parse_conformity_json(serialize_conformity(first), 2)
            assert (second.analysis, second.score, second.word_limit_exceeded) == (
                first.analysis,
                first.score,
                first.word_limit_exceeded,
            )


class TestParseGuideline:
    def test_happy_path(self):
        assert parse_guideline_json('{"GUIDELINE": "Always cite pages."}') == "Always cite pages."

    def test_missing_key(self):
        with pytest.raises(MissingKey):
            parse_guideline_json('{"RULE": "x"}')

    def test_empty_guideline(self):
        with pytest.raises(MalformedOutput):
            parse_guideline_json('{"GUIDELINE": "  "}')


class _StubHandler(BaseHTTPRequestHandler):
    spec: dict = {}
    last: dict = {}

    def do_POST(self):
        try:
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            _StubHandler.last = {
                "path": self.path,
                "body": json.loads(body) if body else None,
                "auth": self.headers.get("Authorization"),
            }
            spec = dict(_StubHandler.spec)
            if spec.get("delay"):
                time.sleep(spec["delay"])
            payload = spec.get("body", {})
            data = (payload if isinstance(payload, str) else json.dumps(payload)).encode("utf-8")
            self.send_response(spec.get("status", 200))
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.spec = {}
    _StubHandler.last = {}
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


class TestHttpChatBackend:
    def test_sends_prompt_and_returns_content(self, stub_server):
        _StubHandler.spec = {"body": {"choices": [{"message": {"content": "hi there"}}]}}
        backend = HttpChatBackend(stub_server, api_key="sk-test")
        params = CompletionParams(model_id="gpt-4o-mini", temperature=0.0, max_output_tokens=77)
        assert backend.complete("the prompt", params) == "hi there"
        assert _StubHandler.last["path"] == "/chat/completions"
        assert _StubHandler.last["auth"] == "Bearer sk-test"
        sent = _StubHandler.last["body"]
        assert sent["model"] == "gpt-4o-mini"
        assert sent["temperature"] == 0.0
        assert sent["max_tokens"] == 77
        assert sent["messages"] == [{"role": "user", "content": "the prompt"}]

    def test_no_auth_header_without_key(self, stub_server):
        _StubHandler.spec = {"body": {"choices": [{"message": {"content": "x"}}]}}
        HttpChatBackend(stub_server, api_key="").complete("p", CompletionParams())
        assert _StubHandler.last["auth"] is None

    def test_key_from_environment(self, stub_server, monkeypatch):
        monkeypatch.setenv("TCFDLENS_LLM_API_KEY", "sk-env")
        _StubHandler.spec = {"body": {"choices": [{"message": {"content": "x"}}]}}
        HttpChatBackend(stub_server).complete("p", CompletionParams())
        assert _StubHandler.last["auth"] == "Bearer sk-env"

    def test_429_maps_to_rate_limited(self, stub_server):
        _StubHandler.spec = {"status": 429, "body": {}}
        with pytest.raises(RateLimited):
            HttpChatBackend(stub_server).complete("p", CompletionParams())

    def test_500_maps_to_unavailable(self, stub_server):
        _StubHandler.spec = {"status": 500, "body": "boom"}
        with pytest.raises(BackendUnavailable):
            HttpChatBackend(stub_server).complete("p", CompletionParams())

    def test_malformed_success_body(self, stub_server):
        _StubHandler.spec = {"body": {"choices": []}}
        with pytest.raises(BackendUnavailable):
            HttpChatBackend(stub_server).complete("p", CompletionParams())

    def test_slow_endpoint_maps_to_timeout(self, stub_server):
        _StubHandler.spec = {"delay": 1.0, "body": {"choices": [{"message": {"content": "x"}}]}}
        with pytest.raises(BackendTimeout):
            HttpChatBackend(stub_server).complete("p", CompletionParams(timeout=0.2))

    def test_unreachable_endpoint(self):
        with pytest.raises(BackendUnavailable):
            HttpChatBackend("http://127.0.0.1:9").complete("p", CompletionParams(timeout=0.5))


class TestHttpEmbeddingBackend:
    def test_sends_batch_and_parses_vectors(self, stub_server):
        _StubHandler.spec = {
            "body": {"data": [{"embedding": [1.0, 0.0]}, {"embedding": [0.5, 0.5]}]}
        }
        backend = HttpEmbeddingBackend(stub_server, model="embed-small", api_key="sk-e")
        vectors = backend.embed(["a", "b"])
        assert [v.values for v in vectors] == [(1.0, 0.0), (0.5, 0.5)]
        assert _StubHandler.last["path"] == "/embeddings"
        assert _StubHandler.last["body"] == {"model": "embed-small", "input": ["a", "b"]}
        assert _StubHandler.last["auth"] == "Bearer sk-e"

    def test_mixed_dimensions_rejected(self, stub_server):
        _StubHandler.spec = {"body": {"data": [{"embedding": [1.0]}, {"embedding": [1.0, 2.0]}]}}
        with pytest.raises(DimensionMismatch):
            HttpEmbeddingBackend(stub_server, model="m").embed(["a", "b"])

    def test_count_mismatch_rejected(self, stub_server):
        _StubHandler.spec = {"body": {"data": [{"embedding": [1.0]}]}}
        with pytest.raises(BackendUnavailable):
            HttpEmbeddingBackend(stub_server, model="m").embed(["a", "b"])

    def test_error_status(self, stub_server):
        _StubHandler.spec = {"status": 503, "body": "overloaded"}
        with pytest.raises(BackendUnavailable):
            HttpEmbeddingBackend(stub_server, model="m").embed(["a"])

    def test_unreachable_endpoint(self):
        with pytest.raises(BackendUnavailable):
            HttpEmbeddingBackend("http://127.0.0.1:9", model="m", timeout=0.5).embed(["a"])
