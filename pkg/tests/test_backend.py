import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx
import pytest

from frontalnav.backend import (
    ProviderConfig,
    ProviderFailure,
    RecordingProvider,
    RemoteProvider,
    ScriptedProvider,
    ScriptEntry,
    ScriptKeyError,
    chat_payload,
    load_script,
    with_parse_retry,
)
from frontalnav.prompting import (
    ImageAttachment,
    PromptBundle,
    PromptKind,
    parse_initial_decision,
    serialize_decision,
)
from frontalnav.prompting.types import InitialDecision, Status, SubgoalStatus

VALID = serialize_decision(
    InitialDecision("ahead", 1, 2.0, "start", (SubgoalStatus("go", Status.IN_PROGRESS),))
)


def bundle(**kw):
    base = dict(kind=PromptKind.INITIAL, system_text="sys", user_text="user", episode_id="ep1", ordinal=0)
    base.update(kw)
    return PromptBundle(**base)


def completion(text):
    return {"choices": [{"message": {"role": "assistant", "content": text}}], "usage": {"total_tokens": 7}}


# scripted ------------------------------------------------------------------------


def test_scripted_lookup():
    p = ScriptedProvider([ScriptEntry("ep1", 0, "initial", "hello")])
    resp = p.decide(bundle())
    assert resp.raw_text == "hello" and resp.latency == 0.0
    assert p.calls == [("ep1", 0, "initial", 0)]


def test_scripted_missing_key_names_it():
    p = ScriptedProvider([])
    with pytest.raises(ScriptKeyError) as err:
        p.decide(bundle(ordinal=3, kind=PromptKind.STEP))
    assert "ep1" in str(err.value) and "ordinal=3" in str(err.value) and "'step'" in str(err.value)


def test_scripted_duplicate_rejected():
    e = ScriptEntry("ep1", 0, "initial", "x")
    with pytest.raises(ValueError):
        ScriptedProvider([e, e])


def test_load_script_accepts_object_responses(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps([
        {"episode": "e", "ordinal": 0, "kind": "initial", "response": {"a": 1}},
        {"episode": "e", "ordinal": 1, "kind": "step", "attempt": 1, "response": "raw"},
    ]))
    entries = load_script(path)
    assert entries[0].raw_text == '{"a": 1}' and entries[1].key == ("e", 1, "step", 1)


def test_load_script_rejects_unknown_kind(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps([{"episode": "e", "ordinal": 0, "kind": "plan", "response": "x"}]))
    with pytest.raises(ValueError):
        load_script(path)


# parse retry ---------------------------------------------------------------------------


def scripted(*replies):
    return ScriptedProvider([ScriptEntry("ep1", 0, "initial", r, attempt=i) for i, r in enumerate(replies)])


def test_valid_first_reply_needs_no_reprompt():
    p = scripted(VALID)
    out = with_parse_retry(p, bundle(), parse_initial_decision)
    assert out.retries == 0 and out.decision.selected_image == 1


def test_garbage_then_valid():
    p = scripted("no idea", VALID)
    out = with_parse_retry(p, bundle(), parse_initial_decision)
    assert out.retries == 1 and len(out.violations) == 1
    assert p.calls == [("ep1", 0, "initial", 0), ("ep1", 0, "initial", 1)]


def test_three_garbage_replies_exhaust():
    p = scripted("a", "b", "c", VALID)
    with pytest.raises(ProviderFailure) as err:
        with_parse_retry(p, bundle(), parse_initial_decision, max_reprompts=2)
    assert len(p.calls) == 3
    assert type(err.value.last_error).__name__ == "MalformedOutput"
    assert [r.raw_text for r in err.value.replies] == ["a", "b", "c"]


def test_reprompt_carries_correction():
    seen = []

    class Spy:
        def decide(self, b):
            seen.append(b)
            return scripted("oops", VALID).decide(b)

    with_parse_retry(Spy(), bundle(), parse_initial_decision)
    assert seen[1].attempt == 1
    (previous, note), = seen[1].corrections
    assert previous == "oops" and "oops" in note
    payload = chat_payload(seen[1], ProviderConfig())
    assert [m["role"] for m in payload["messages"]] == ["system", "user", "assistant", "user"]


# remote: loopback HTTP stub ----------------------------------------------------------------


class Stub:
    """Serves queued (status, body, headers) replies and records requests."""

    def __init__(self, replies, delay=0.0):
        self.replies = list(replies)
        self.requests = []
        self.delay = delay
        self.inflight = 0
        self.peak = 0
        self.lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                with stub.lock:
                    stub.requests.append((self.path, dict(self.headers), body))
                    stub.inflight += 1
                    stub.peak = max(stub.peak, stub.inflight)
                    status, payload, headers = stub.replies.pop(0) if len(stub.replies) > 1 else stub.replies[0]
                time.sleep(stub.delay)
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                for k, v in headers.items():
                    self.send_header(k, v)
                self.end_headers()
                self.wfile.write(data)
                with stub.lock:
                    stub.inflight -= 1

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def endpoint(self):
        return f"http://127.0.0.1:{self.server.server_address[1]}/v1"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


def test_remote_stub_returns_completion(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "sk-test")
    img = ImageAttachment(1, b"\x89PNG fake")
    with Stub([(200, completion("fixed reply"), {})]) as stub:
        cfg = ProviderConfig(endpoint=stub.endpoint, api_key_env="TEST_KEY", model="m")
        resp = RemoteProvider(cfg).decide(bundle(images=(img,)))
    assert resp.raw_text == "fixed reply" and resp.usage == {"total_tokens": 7}
    path, headers, body = stub.requests[0]
    assert path == "/v1/chat/completions"
    assert headers["Authorization"] == "Bearer sk-test"
    assert body["model"] == "m" and body["temperature"] == 0
    parts = body["messages"][1]["content"]
    assert parts[-1]["image_url"]["url"].startswith("data:image/png;base64,")


def test_remote_without_key_sends_no_auth(monkeypatch):
    monkeypatch.delenv("NO_SUCH_KEY", raising=False)
    with Stub([(200, completion("ok"), {})]) as stub:
        RemoteProvider(ProviderConfig(endpoint=stub.endpoint, api_key_env="NO_SUCH_KEY")).decide(bundle())
    assert "Authorization" not in stub.requests[0][1]


def test_remote_concurrency_cap():
    with Stub([(200, completion("ok"), {})], delay=0.05) as stub:
        provider = RemoteProvider(ProviderConfig(endpoint=stub.endpoint, max_concurrent=2))
        threads = [threading.Thread(target=provider.decide, args=(bundle(),)) for _ in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    assert provider.request_count == 6 and stub.peak <= 2


# remote: retry policy via mock transport ------------------------------------------------------


def mock_provider(responses, **cfg):
    calls = []
    sleeps = []

    def handler(request):
        calls.append(request)
        item = responses[min(len(calls) - 1, len(responses) - 1)]
        if isinstance(item, Exception):
            raise item
        return item

    client = httpx.Client(transport=httpx.MockTransport(handler))
    provider = RemoteProvider(ProviderConfig(endpoint="http://stub/v1", **cfg), client=client, sleep=sleeps.append)
    return provider, calls, sleeps


def test_5xx_retried_with_backoff():
    p, calls, sleeps = mock_provider(
        [httpx.Response(503), httpx.Response(502), httpx.Response(200, json=completion("ok"))],
        backoff_base=0.5,
    )
    assert p.decide(bundle()).raw_text == "ok"
    assert len(calls) == 3 and sleeps == [0.5, 1.0]


def test_429_honours_retry_after():
    p, calls, sleeps = mock_provider(
        [httpx.Response(429, headers={"Retry-After": "7"}), httpx.Response(200, json=completion("ok"))]
    )
    p.decide(bundle())
    assert sleeps == [7.0]


def test_transport_errors_exhaust_into_failure():
    p, calls, sleeps = mock_provider([httpx.ConnectError("refused")], max_retries=2)
    with pytest.raises(ProviderFailure) as err:
        p.decide(bundle())
    assert len(calls) == 3 and len(sleeps) == 2
    assert isinstance(err.value.last_error, httpx.ConnectError)


def test_4xx_fails_immediately():
    p, calls, sleeps = mock_provider([httpx.Response(401, json={"error": "bad key"})])
    with pytest.raises(ProviderFailure):
        p.decide(bundle())
    assert len(calls) == 1 and sleeps == []


def test_malformed_body_is_failure():
    p, _, _ = mock_provider([httpx.Response(200, json={"choices": []})])
    with pytest.raises(ProviderFailure):
        p.decide(bundle())


def test_recording_round_trips_to_script(tmp_path):
    inner = scripted(VALID)
    rec = RecordingProvider(inner, tmp_path / "rec.jsonl")
    rec.decide(bundle())
    replay = ScriptedProvider(load_script_from(rec.as_script(), tmp_path))
    assert replay.decide(bundle()).raw_text == VALID
    assert len((tmp_path / "rec.jsonl").read_text().splitlines()) == 1


def load_script_from(entries, tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps(entries))
    return load_script(path)


def test_config_validation():
    with pytest.raises(ValueError):
        ProviderConfig(max_retries=-1)
    with pytest.raises(ValueError):
        ProviderConfig(max_concurrent=0)
