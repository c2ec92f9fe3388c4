import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from softbound.data import ExpandedQuery
from softbound.expansion import (CONSTRAINT, ChatClient, CacheEntry, ExpansionCache, ExpansionRequest,
                                 LLMRequestError, OfflineCacheMiss, QueryExpander, UnparseableResponse,
                                 build_prompt, cache_key, expand_query, inject_query_noise, parse_expansion)

GOOD = "START: The hand moves to the plate.\nEND: The food enters the mouth."


class FakeClient:
    def __init__(self, responses=None, delay=0.0):
        self.responses = list(responses or [])
        self.calls = 0
        self.delay = delay
        self.prompts = []

    def complete(self, prompt, model, temperature, max_tokens):
        self.calls += 1
        self.prompts.append(prompt)
        if self.delay:
            time.sleep(self.delay)
        item = self.responses.pop(0) if self.responses else GOOD
        if isinstance(item, Exception):
            raise item
        return item


class TestPrompt:
    def test_contains_instruction_and_action(self):
        prompt = build_prompt("person eats sandwich")
        assert "Please describe the beginning and ending process in one sentence of the following action person eats sandwich" in prompt
        assert "The description you generate cannot contain any objects that are not presented in the action" in prompt
        assert "START:" in prompt and "END:" in prompt

    def test_trims_whitespace(self):
        assert "following action close the door." in build_prompt(" close the door ")

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_prompt("")
        with pytest.raises(ValueError):
            build_prompt("   ")


class TestParse:
    def test_labelled(self):
        raw = "START: The person reaches toward the door.\nEND: The door rests fully shut."
        assert parse_expansion(raw) == ("The person reaches toward the door.", "The door rests fully shut.")

    def test_labels_case_insensitive_with_preamble(self):
        raw = "Sure! Here you go:\n**start**: Hand grips handle.\n  end - Door closes."
        assert parse_expansion(raw) == ("Hand grips handle.", "Door closes.")

    def test_sentence_fallback(self):
        raw = "The hand moves to the plate. The food enters the mouth."
        assert parse_expansion(raw) == ("The hand moves to the plate.", "The food enters the mouth.")

    def test_unparseable(self):
        with pytest.raises(UnparseableResponse):
            parse_expansion("ok")


class TestCache:
    def test_key_is_stable(self):
        assert cache_key("eat", "m") == cache_key(" eat ", "m")
        assert cache_key("eat", "m") != cache_key("eat", "m2")
        assert cache_key("eat", "m", "v1") != cache_key("eat", "m", "v2")

    def test_persist_and_compact(self, tmp_path):
        path = tmp_path / "c.jsonl"
        cache = ExpansionCache(path)
        cache.put(CacheEntry("k", "a.", "b.", 1.0))
        cache.put(CacheEntry("k", "c.", "d.", 2.0))
        assert len(path.read_text().splitlines()) == 2
        reopened = ExpansionCache(path)
        assert reopened.get("k").start_desc == "c."
        reopened.compact()
        assert len(path.read_text().splitlines()) == 1
        assert ExpansionCache(path).get("k").end_desc == "d."


class TestExpand:
    def req(self, text="person eats sandwich"):
        return ExpansionRequest(text)

    def test_warm_cache_makes_no_calls(self):
        cache = ExpansionCache()
        cache.put(CacheEntry(cache_key("person eats sandwich", "llama3-8b"), "s.", "e.", 0.0))
        client = FakeClient()
        out = expand_query(self.req(), cache, client)
        assert (out.start_desc, out.end_desc) == ("s.", "e.")
        assert client.calls == 0

    def test_offline_miss_names_query(self):
        with pytest.raises(OfflineCacheMiss, match="person eats sandwich"):
            expand_query(self.req(), ExpansionCache(), FakeClient(), offline=True)

    def test_second_identical_request_hits_cache(self, tmp_path):
        client = FakeClient()
        ex = QueryExpander(ExpansionCache(tmp_path / "c.jsonl"), client)
        first = ex.expand(self.req())
        second = ex.expand(self.req())
        assert first == second
        assert client.calls == 1
        assert isinstance(first, ExpandedQuery) and first.source_model == "llama3-8b"

    def test_network_retries_with_backoff(self):
        sleeps = []
        client = FakeClient([LLMRequestError("down"), LLMRequestError("down"), GOOD])
        ex = QueryExpander(ExpansionCache(), client, sleep=sleeps.append, backoff=0.5)
        ex.expand(self.req())
        assert client.calls == 3
        assert sleeps == [0.5, 1.0]

    def test_network_gives_up_after_three(self):
        client = FakeClient([LLMRequestError("down")] * 5)
        ex = QueryExpander(ExpansionCache(), client, sleep=lambda s: None)
        with pytest.raises(LLMRequestError):
            ex.expand(self.req())
        assert client.calls == 3

    def test_reprompts_on_unparseable(self):
        client = FakeClient(["ok", "hmm", GOOD])
        assert QueryExpander(ExpansionCache(), client).expand(self.req()).start_desc == "The hand moves to the plate."
        assert client.calls == 3

    def test_unparseable_after_reprompts(self):
        cache = ExpansionCache()
        client = FakeClient(["ok"] * 3)
        with pytest.raises(UnparseableResponse):
            QueryExpander(cache, client).expand(self.req())
        assert client.calls == 3
        assert len(cache) == 0

    def test_inflight_deduplication(self):
        client = FakeClient(delay=0.2)
        ex = QueryExpander(ExpansionCache(), client)
        with ThreadPoolExecutor(8) as pool:
            outs = list(pool.map(lambda _: ex.expand(self.req()), range(8)))
        assert client.calls == 1
        assert len(set(outs)) == 1

    def test_request_validation(self):
        with pytest.raises(ValueError):
            ExpansionRequest("  ")
        with pytest.raises(ValueError):
            ExpansionRequest("x", temperature=2.5)


class TestNoise:
    def records(self, n=10):
        return [ExpandedQuery(f"q{i}", f"start {i}.", f"end {i}.") for i in range(n)]

    def test_zero_fraction_is_identity(self):
        recs = self.records()
        assert inject_query_noise(recs, 0.0, 1) == recs

    def test_full_fraction_is_involution(self):
        recs = self.records()
        once = inject_query_noise(recs, 1.0, 1)
        assert all(r.swapped for r in once)
        assert inject_query_noise(once, 1.0, 2) == recs

    def test_half_swaps_exactly_five_deterministically(self):
        recs = self.records()
        a = inject_query_noise(recs, 0.5, 7)
        b = inject_query_noise(recs, 0.5, 7)
        swapped = [i for i, r in enumerate(a) if r.swapped]
        assert len(swapped) == 5
        assert swapped == [i for i, r in enumerate(b) if r.swapped]
        assert [r.original for r in a] == [r.original for r in recs]
        for i in swapped:
            assert a[i].start_desc == recs[i].end_desc

    def test_fraction_validated(self):
        with pytest.raises(ValueError):
            inject_query_noise(self.records(), 1.5, 0)


class _Handler(BaseHTTPRequestHandler):
    received = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).received.append((self.path, dict(self.headers), body))
        payload = json.dumps({"choices": [{"message": {"role": "assistant", "content": GOOD}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def chat_server():
    _Handler.received = []
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", _Handler.received
    server.shutdown()


class TestChatClientWire:
    def test_request_body_and_response_parsing(self, chat_server, monkeypatch):
        url, received = chat_server
        monkeypatch.setenv("LLMX_BASE_URL", url)
        monkeypatch.setenv("LLMX_API_KEY", "secret")
        client = ChatClient()
        text = client.complete("hello", "llama3-8b", 0.0, 64)
        assert text == GOOD
        path, headers, body = received[0]
        assert path == "/chat/completions"
        assert headers["Authorization"] == "Bearer secret"
        assert body == {"model": "llama3-8b", "messages": [{"role": "user", "content": "hello"}],
                        "temperature": 0.0, "max_tokens": 64}

    def test_end_to_end_through_expander(self, chat_server):
        url, received = chat_server
        ex = QueryExpander(ExpansionCache(), ChatClient(base_url=url, api_key=""))
        out = ex.expand(ExpansionRequest("close the door"))
        assert out.end_desc == "The food enters the mouth."
        assert CONSTRAINT in received[0][2]["messages"][0]["content"]

    def test_unreachable_endpoint(self):
        client = ChatClient(base_url="http://127.0.0.1:9", api_key="", timeout=0.5)
        with pytest.raises(LLMRequestError):
            client.complete("x", "m", 0.0, 8)

    def test_unconfigured(self, monkeypatch):
        monkeypatch.delenv("LLMX_BASE_URL", raising=False)
        with pytest.raises(LLMRequestError, match="LLMX_BASE_URL"):
            ChatClient().complete("x", "m", 0.0, 8)
