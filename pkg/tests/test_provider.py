"""Token estimation, budgeting, retry, stub determinism, and HTTP dialects."""

import json
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_stub
from paperlens.prompts import PromptBundle, PromptKind
from paperlens.provider import (
    AuthError,
    ContextOverflow,
    ExhaustedRetries,
    HttpChatClient,
    ProviderConfig,
    StubFixtureMissing,
    estimate_tokens,
    make_client,
    stub_key,
    write_stub_fixture,
)


def bundle_for(refs=(), payload="", kind=PromptKind.ANNOTATION, instructions="do the task"):
    return PromptBundle(kind=kind, instructions=instructions, payload_text=payload,
                        payload_refs=tuple(refs))


# --- estimate_tokens ---------------------------------------------------------


def test_estimate_empty_is_zero():
    assert estimate_tokens("") == 0


def test_estimate_4000_chars():
    # ceil(4000 / 4) * 1.10 = 1100
    assert estimate_tokens("x" * 4000) == 1100


def test_estimate_concat_monotone():
    a, b = "alpha " * 10, "beta " * 25
    assert estimate_tokens(a + b) >= max(estimate_tokens(a), estimate_tokens(b))


@given(st.text(max_size=500), st.text(max_size=500))
def test_estimate_monotone_property(a, b):
    assert estimate_tokens(a + b) >= estimate_tokens(a)
    assert estimate_tokens(a) >= 0


# --- stub provider -----------------------------------------------------------


def test_stub_replays_fixture(tmp_path):
    write_stub_fixture(tmp_path, "annotation", ["doc2", "doc1"], "canned answer")
    client = make_stub(tmp_path)
    response = client.complete(bundle_for(["doc1", "doc2"]), "payload")
    assert response.text == "canned answer"
    assert response.attempts == 1


def test_stub_key_order_independent():
    assert stub_key("annotation", ["b", "a"]) == stub_key("annotation", ["a", "b"])
    assert stub_key("annotation", ["a"]) != stub_key("filter", ["a"])


def test_stub_deterministic(tmp_path):
    write_stub_fixture(tmp_path, "annotation", ["d"], "same thing")
    client = make_stub(tmp_path)
    first = client.complete(bundle_for(["d"]))
    second = client.complete(bundle_for(["d"]))
    assert first.text == second.text == "same thing"


def test_stub_missing_fixture_is_explicit(tmp_path):
    client = make_stub(tmp_path)
    with pytest.raises(StubFixtureMissing):
        client.complete(bundle_for(["nope"]))


def test_oversize_payload_never_reaches_send(tmp_path):
    client = make_stub(tmp_path, context_window_tokens=5000, max_output_tokens=4000)
    with pytest.raises(ContextOverflow) as err:
        client.complete(bundle_for(["d"]), "y" * 100_000)
    assert client.calls == 0
    assert err.value.required > err.value.available == 5000


def test_scripted_failures_then_success(tmp_path, monkeypatch):
    monkeypatch.setattr("paperlens.provider.time.sleep", lambda s: None)
    write_stub_fixture(tmp_path, "annotation", ["d"], "eventually")
    client = make_stub(tmp_path)
    key = f"annotation-{stub_key('annotation', ['d'])}"
    client.script.fail_counts[key] = 2
    response = client.complete(bundle_for(["d"]))
    assert response.text == "eventually"
    assert response.attempts == 3


def test_permanent_failure_exhausts_retries(tmp_path, monkeypatch):
    monkeypatch.setattr("paperlens.provider.time.sleep", lambda s: None)
    client = make_stub(tmp_path, max_retries=2)
    key = f"annotation-{stub_key('annotation', ['d'])}"
    client.script.fail_counts[key] = -1
    with pytest.raises(ExhaustedRetries) as err:
        client.complete(bundle_for(["d"]))
    assert err.value.attempts == 3  # max_retries + 1


def test_inflight_high_water_respects_limit(tmp_path):
    write_stub_fixture(tmp_path, "annotation", ["d"], "slow")
    client = make_stub(tmp_path, max_inflight=2)
    client.send_delay_s = 0.05
    threads = [
        threading.Thread(target=lambda: client.complete(bundle_for(["d"])))
        for _ in range(8)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert client.calls == 8
    assert 1 <= client.inflight_high_water <= 2


def test_audit_log_written_and_redacted(tmp_path, monkeypatch):
    monkeypatch.setenv("SECRET_KEY_VAR", "super-secret-value")
    write_stub_fixture(tmp_path, "annotation", ["d"], "answer")
    audit = tmp_path / "audit.jsonl"
    client = make_stub(tmp_path)
    client.audit_path = audit
    client.complete(bundle_for(["d"]), "payload text")
    entries = [json.loads(line) for line in audit.read_text().splitlines()]
    assert len(entries) == 1
    assert entries[0]["response_body"] == "answer"
    assert "payload text" in entries[0]["request_body"]
    assert "super-secret-value" not in audit.read_text()


# --- config validation -------------------------------------------------------


def test_config_invariants():
    with pytest.raises(ValueError):
        ProviderConfig(context_window_tokens=10, max_output_tokens=20)
    with pytest.raises(ValueError):
        ProviderConfig(max_inflight=0)


def test_make_client_dialects(tmp_path):
    assert make_client(ProviderConfig(dialect="stub", fixtures_dir=str(tmp_path)))
    assert make_client(ProviderConfig(dialect="openai"))
    assert make_client(ProviderConfig(dialect="gemini"))
    with pytest.raises(ValueError):
        make_client(ProviderConfig(dialect="smoke-signals"))


# --- HTTP dialects through a fake session ------------------------------------


class FakeResponse:
    def __init__(self, status_code, body):
        self.status_code = status_code
        self._body = body
        self.text = json.dumps(body)

    def json(self):
        return self._body


class FakeSession:
    """Scripted transport: pops one canned response per request."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        if not self.responses:
            raise AssertionError("no scripted responses left")
        return self.responses.pop(0)


def openai_ok(text="hi"):
    return FakeResponse(
        200,
        {
            "choices": [{"message": {"content": text}}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 3},
        },
    )


def gemini_ok(text="hi"):
    return FakeResponse(
        200,
        {
            "candidates": [{"content": {"parts": [{"text": text}]}}],
            "usageMetadata": {"promptTokenCount": 12, "candidatesTokenCount": 3},
        },
    )


def http_client(dialect, session, **overrides):
    cfg = ProviderConfig(
        dialect=dialect,
        base_url="https://example.test/v1",
        model_name="test-model",
        api_key_env="TEST_API_KEY",
        max_retries=2,
        backoff_base_ms=1,
        **overrides,
    )
    return HttpChatClient(cfg, session=session)


def test_openai_request_shape(monkeypatch):
    monkeypatch.setenv("TEST_API_KEY", "k-123")
    session = FakeSession([openai_ok("result text")])
    client = http_client("openai", session)
    response = client.complete(bundle_for(["d"]), "payload")
    assert response.text == "result text"
    assert response.input_tokens == 12 and response.output_tokens == 3
    req = session.requests[0]
    assert req["url"] == "https://example.test/v1/chat/completions"
    assert req["json"]["model"] == "test-model"
    assert req["json"]["messages"][0]["role"] == "user"
    assert "payload" in req["json"]["messages"][0]["content"]
    assert req["headers"]["Authorization"] == "Bearer k-123"


def test_gemini_request_shape(monkeypatch):
    monkeypatch.setenv("TEST_API_KEY", "k-456")
    session = FakeSession([gemini_ok("gemini text")])
    client = http_client("gemini", session)
    response = client.complete(bundle_for(["d"]))
    assert response.text == "gemini text"
    req = session.requests[0]
    assert req["url"].endswith("/models/test-model:generateContent")
    assert req["headers"]["x-goog-api-key"] == "k-456"
    assert req["json"]["contents"][0]["parts"][0]["text"]


def test_missing_api_key_is_auth_error(monkeypatch):
    monkeypatch.delenv("TEST_API_KEY", raising=False)
    client = http_client("openai", FakeSession([]))
    with pytest.raises(AuthError, match="TEST_API_KEY"):
        client.complete(bundle_for(["d"]))


def test_http_401_is_auth_error_no_retry(monkeypatch):
    monkeypatch.setenv("TEST_API_KEY", "k")
    session = FakeSession([FakeResponse(401, {"error": "bad key"})])
    client = http_client("openai", session)
    with pytest.raises(AuthError):
        client.complete(bundle_for(["d"]))
    assert len(session.requests) == 1


def test_rate_limit_retried_then_succeeds(monkeypatch):
    monkeypatch.setenv("TEST_API_KEY", "k")
    monkeypatch.setattr("paperlens.provider.time.sleep", lambda s: None)
    session = FakeSession([FakeResponse(429, {}), FakeResponse(503, {}), openai_ok("ok")])
    client = http_client("openai", session)
    response = client.complete(bundle_for(["d"]))
    assert response.text == "ok"
    assert response.attempts == 3


def test_persistent_5xx_exhausts(monkeypatch):
    monkeypatch.setenv("TEST_API_KEY", "k")
    monkeypatch.setattr("paperlens.provider.time.sleep", lambda s: None)
    session = FakeSession([FakeResponse(500, {})] * 3)
    client = http_client("openai", session)
    with pytest.raises(ExhaustedRetries):
        client.complete(bundle_for(["d"]))
    assert len(session.requests) == 3
