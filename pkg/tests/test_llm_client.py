import json
import threading

import httpx
import pytest

from dsmseq import llm_client
from dsmseq.llm_client import (
    AuthenticationError,
    BackendProfile,
    HttpBackend,
    LlmRequest,
    RateLimitError,
    ScriptExhaustedError,
    ScriptedBackend,
    Transcript,
)

OPENAI = BackendProfile(name="oa", endpoint="https://llm.test/v1/chat/completions", model="m1", auth_env="TEST_KEY")
ANTHROPIC = BackendProfile(name="an", endpoint="https://llm.test/v1/messages", model="m2", auth_env="TEST_KEY", style="anthropic")


def chat_reply(text):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}], "usage": {"total_tokens": 7}})


def make_backend(handler, profile=OPENAI, **kw):
    sleeps = []
    backend = HttpBackend(
        profile,
        api_key="k",
        client=httpx.Client(transport=httpx.MockTransport(handler)),
        sleep=sleeps.append,
        **kw,
    )
    return backend, sleeps


# ----------------------------------------------------------------- scripted


def test_scripted_echo():
    backend = ScriptedBackend(["<order>a,b</order>"])
    assert backend.complete(LlmRequest("hi")).text == "<order>a,b</order>"


def test_scripted_empty():
    with pytest.raises(ScriptExhaustedError):
        ScriptedBackend([]).complete(LlmRequest("hi"))


def test_scripted_replays_in_order():
    backend = llm_client.scripted_backend(["1", "2", "3"])
    assert [backend.complete(LlmRequest("p")).text for _ in range(3)] == ["1", "2", "3"]
    assert backend.consumed == 3 and backend.remaining == 0


def test_scripted_second_call_errors():
    backend = ScriptedBackend(["only"])
    backend.complete(LlmRequest("p"))
    with pytest.raises(ScriptExhaustedError):
        backend.complete(LlmRequest("p"))


def test_scripted_can_raise_items():
    backend = ScriptedBackend([llm_client.TransportError("down")])
    with pytest.raises(llm_client.TransportError):
        backend.complete(LlmRequest("p"))


def test_request_requires_prompt():
    with pytest.raises(ValueError):
        LlmRequest("")


# --------------------------------------------------------------------- http


def test_http_success_and_body_shape():
    seen = []

    def handler(request):
        seen.append((dict(request.headers), json.loads(request.content)))
        return chat_reply("<order>x</order>")

    backend, _ = make_backend(handler)
    resp = backend.complete(LlmRequest("prompt text", max_output_tokens=55))
    assert resp.text == "<order>x</order>"
    assert resp.usage == {"total_tokens": 7}
    headers, body = seen[0]
    assert headers["authorization"] == "Bearer k"
    assert set(body) == {"model", "messages", "max_tokens"}
    assert body["messages"] == [{"role": "user", "content": "prompt text"}]
    assert body["model"] == "m1" and body["max_tokens"] == 55


def test_http_temperature_only_when_overridden():
    bodies = []

    def handler(request):
        bodies.append(json.loads(request.content))
        return chat_reply("ok")

    backend, _ = make_backend(handler)
    backend.complete(LlmRequest("p", temperature_override=0.3))
    assert bodies[0]["temperature"] == 0.3


def test_http_anthropic_style():
    seen = []

    def handler(request):
        seen.append(request.headers)
        return httpx.Response(200, json={"content": [{"type": "text", "text": "<order>a</order>"}]})

    backend, _ = make_backend(handler, profile=ANTHROPIC)
    assert backend.complete(LlmRequest("p")).text == "<order>a</order>"
    assert seen[0]["x-api-key"] == "k"


def test_http_retries_transient_then_succeeds():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            return httpx.Response(429)
        if len(calls) == 2:
            return httpx.Response(503)
        return chat_reply("fine")

    backend, sleeps = make_backend(handler, backoff_base=0.5)
    assert backend.complete(LlmRequest("p")).text == "fine"
    assert len(calls) == 3
    assert sleeps == [0.5, 1.0]


def test_http_rate_limit_exhausted():
    backend, sleeps = make_backend(lambda r: httpx.Response(429))
    with pytest.raises(RateLimitError):
        backend.complete(LlmRequest("p"))
    assert len(sleeps) == 2


def test_http_timeout_classified():
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    backend, _ = make_backend(handler)
    with pytest.raises(llm_client.LlmTimeoutError):
        backend.complete(LlmRequest("p"))


def test_http_connect_error_classified():
    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    backend, _ = make_backend(handler)
    with pytest.raises(llm_client.TransportError):
        backend.complete(LlmRequest("p"))


def test_http_bad_credentials_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401)

    backend, sleeps = make_backend(handler)
    with pytest.raises(AuthenticationError):
        backend.complete(LlmRequest("p"))
    assert len(calls) == 1 and sleeps == []


def test_http_missing_key(monkeypatch):
    monkeypatch.delenv("TEST_KEY", raising=False)
    backend = HttpBackend(OPENAI, client=httpx.Client(transport=httpx.MockTransport(lambda r: chat_reply("x"))))
    with pytest.raises(AuthenticationError, match="TEST_KEY"):
        backend.complete(LlmRequest("p"))


def test_http_key_from_env(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "secret")
    assert HttpBackend(OPENAI).api_key == "secret"


def test_http_unexpected_payload():
    backend, _ = make_backend(lambda r: httpx.Response(200, json={"nope": 1}))
    with pytest.raises(llm_client.LlmError, match="unexpected response"):
        backend.complete(LlmRequest("p"))


def test_in_flight_limit_bounds_concurrency():
    llm_client.set_max_in_flight(2)
    active = []
    peak = []
    lock = threading.Lock()
    gate = threading.Event()

    def handler(request):
        with lock:
            active.append(1)
            peak.append(len(active))
        gate.wait(0.05)
        with lock:
            active.pop()
        return chat_reply("ok")

    backends = [make_backend(handler)[0] for _ in range(6)]
    threads = [threading.Thread(target=b.complete, args=(LlmRequest("p"),)) for b in backends]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    llm_client.set_max_in_flight(8)
    assert max(peak) <= 2


# ------------------------------------------------------------------ profiles


def test_load_profile(tmp_path, data_dir):
    profile = llm_client.load_profile(data_dir / "profile_anthropic.json")
    assert profile.style == "anthropic" and profile.auth_env == "ANTHROPIC_API_KEY"
    bad = tmp_path / "p.json"
    bad.write_text(json.dumps({"name": "x"}))
    with pytest.raises(ValueError, match="endpoint"):
        llm_client.load_profile(bad)


# ---------------------------------------------------------------- transcript


def test_transcript_records(tmp_path):
    path = tmp_path / "t" / "run.jsonl"
    log = Transcript(path, "run-1")
    req = LlmRequest("the prompt")
    log.record(1, req, llm_client.LlmResponse("reply", latency=0.25))
    log.record(2, req, None, error="boom")
    rows = llm_client.read_transcript(path)
    assert [r["iter"] for r in rows] == [1, 2]
    assert rows[0]["run"] == "run-1"
    assert rows[0]["prompt"] == "the prompt" and rows[0]["response"] == "reply"
    assert rows[0]["latency_ms"] == 250
    assert {"run", "iter", "prompt", "response", "latency_ms", "ts"} <= set(rows[0])
    assert rows[1]["error"] == "boom"
