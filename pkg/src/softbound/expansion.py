"""LLM-powered query expansion into start/end boundary descriptions.

The prompt asks a chat model to describe how an action begins and ends, and
to answer on two labelled lines (``START: ...`` / ``END: ...``). Answers are
cached in an append-only JSON Lines file keyed by a content hash of
``(action_text, model_id, prompt_version)``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import Future
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import requests

from .data import ExpandedQuery

logger = logging.getLogger(__name__)

PROMPT_VERSION = "v1"
DEFAULT_MODEL = "llama3-8b"

INSTRUCTION = "Please describe the beginning and ending process in one sentence of the following action {action}."
CONSTRAINT = "The description you generate cannot contain any objects that are not presented in the action."
FORMAT_DIRECTIVE = (
    "Answer with exactly two lines:\n"
    "START: <one sentence describing how the action begins>\n"
    "END: <one sentence describing how the action ends>"
)

ENV_BASE_URL = "LLMX_BASE_URL"
ENV_API_KEY = "LLMX_API_KEY"


class ExpansionError(RuntimeError):
    """Base class for query-expansion failures."""


class UnparseableResponse(ExpansionError):
    pass


class OfflineCacheMiss(ExpansionError):
    pass


class LLMRequestError(ExpansionError):
    """The endpoint could not be reached or returned an error."""


@dataclass(frozen=True)
class ExpansionRequest:
    action_text: str
    model_id: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_tokens: int = 128

    def __post_init__(self):
        if not self.action_text.strip():
            raise ValueError("action text is empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class CacheEntry:
    key: str
    start_desc: str
    end_desc: str
    created_at: float


def build_prompt(action_text: str) -> str:
    action = " ".join(action_text.split())
    if not action:
        raise ValueError("action text is empty")
    return "\n".join([INSTRUCTION.format(action=action), CONSTRAINT, FORMAT_DIRECTIVE])


_LABEL = re.compile(r"^[\W_]*(start|end)[*_\s]*[:\-]\s*(.+?)\s*$", re.IGNORECASE)
_SENTENCE = re.compile(r"[^.!?]+[.!?]+|[^.!?]+$")


def parse_expansion(raw_response: str) -> tuple[str, str]:
    """Extract ``(start_desc, end_desc)`` from a model answer.

    Labelled ``START:``/``END:`` lines win; otherwise the first two sentences
    are taken in order.

    Raises:
        UnparseableResponse: fewer than two usable sentences.
    """
    labelled = {}
    for line in raw_response.splitlines():
        m = _LABEL.match(line)
        if m:
            labelled.setdefault(m.group(1).lower(), m.group(2))
    if labelled.get("start") and labelled.get("end"):
        return labelled["start"], labelled["end"]

    sentences = [s.strip() for s in _SENTENCE.findall(" ".join(raw_response.split()))]
    sentences = [s for s in sentences if re.search(r"\w", s)]
    if len(sentences) < 2:
        raise UnparseableResponse(f"could not find two boundary sentences in {raw_response!r}")
    return sentences[0], sentences[1]


def cache_key(action_text: str, model_id: str, prompt_version: str = PROMPT_VERSION) -> str:
    payload = json.dumps([" ".join(action_text.split()), model_id, prompt_version])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ExpansionCache:
    """Append-only JSON Lines cache of expansions.

    Reads are lock-free dictionary lookups; appends go through a single lock so
    one writer touches the file at a time. The newest line for a key wins.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, CacheEntry] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        obj = json.loads(line)
                        self._entries[obj["key"]] = CacheEntry(**obj)

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key):
        return key in self._entries

    def get(self, key: str) -> Optional[CacheEntry]:
        return self._entries.get(key)

    def put(self, entry: CacheEntry) -> None:
        with self._lock:
            self._entries[entry.key] = entry
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry.__dict__, sort_keys=True) + "\n")

    def compact(self) -> None:
        """Rewrite the file keeping only the newest entry per key."""
        if self.path is None:
            return
        with self._lock:
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                for entry in self._entries.values():
                    fh.write(json.dumps(entry.__dict__, sort_keys=True) + "\n")
            os.replace(tmp, self.path)


class ChatClient:
    """Minimal client for an OpenAI-style ``/chat/completions`` endpoint.

    ``calls`` counts HTTP requests issued, which the tests use to observe
    caching.
    """

    def __init__(self, base_url: Optional[str] = None, api_key: Optional[str] = None, timeout: float = 60.0):
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL, "")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY)
        self.timeout = timeout
        self.calls = 0

    def complete(self, prompt: str, model: str, temperature: float, max_tokens: int) -> str:
        if not self.base_url:
            raise LLMRequestError(f"no endpoint configured; set {ENV_BASE_URL}")
        body = {
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        self.calls += 1
        try:
            resp = requests.post(f"{self.base_url}/chat/completions", json=body, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except requests.RequestException as exc:
            raise LLMRequestError(str(exc)) from exc
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise LLMRequestError(f"malformed response body: {exc}") from exc


class QueryExpander:
    """Cache-first expansion with retries and in-flight request deduplication.

    Args:
        cache: an :class:`ExpansionCache`.
        client: object with a ``complete(prompt, model, temperature, max_tokens)``
            method; may be None when running offline.
        offline: never contact the client; cache misses raise
            :class:`OfflineCacheMiss`.
        network_attempts: attempts per call for :class:`LLMRequestError`.
        reprompts: extra calls allowed after an unparseable answer.
        backoff: base delay in seconds, doubled per network retry.
    """

    def __init__(self, cache, client=None, offline=False, prompt_version=PROMPT_VERSION,
                 network_attempts=3, reprompts=2, backoff=0.5, sleep=time.sleep, clock=time.time):
        self.cache = cache
        self.client = client
        self.offline = offline
        self.prompt_version = prompt_version
        self.network_attempts = network_attempts
        self.reprompts = reprompts
        self.backoff = backoff
        self._sleep = sleep
        self._clock = clock
        self._inflight: dict[str, Future] = {}
        self._lock = threading.Lock()

    def expand(self, req: ExpansionRequest) -> ExpandedQuery:
        key = cache_key(req.action_text, req.model_id, self.prompt_version)
        hit = self.cache.get(key)
        if hit is not None:
            return ExpandedQuery(req.action_text, hit.start_desc, hit.end_desc, req.model_id)
        if self.offline or self.client is None:
            raise OfflineCacheMiss(f"no cached expansion for {req.action_text!r} (offline)")

        with self._lock:
            fut = self._inflight.get(key)
            owner = fut is None
            if owner:
                fut = self._inflight[key] = Future()
        if not owner:
            start, end = fut.result()
            return ExpandedQuery(req.action_text, start, end, req.model_id)

        try:
            start, end = self._fetch(req)
            self.cache.put(CacheEntry(key, start, end, self._clock()))
            fut.set_result((start, end))
        except BaseException as exc:
            fut.set_exception(exc)
            raise
        finally:
            with self._lock:
                self._inflight.pop(key, None)
        return ExpandedQuery(req.action_text, start, end, req.model_id)

    def _fetch(self, req: ExpansionRequest) -> tuple[str, str]:
        prompt = build_prompt(req.action_text)
        for attempt in range(self.reprompts + 1):
            raw = self._call_with_retry(prompt, req)
            try:
                return parse_expansion(raw)
            except UnparseableResponse:
                logger.warning("unparseable answer for %r (attempt %d)", req.action_text, attempt + 1)
                if attempt == self.reprompts:
                    raise

    def _call_with_retry(self, prompt: str, req: ExpansionRequest) -> str:
        for attempt in range(self.network_attempts):
            try:
                return self.client.complete(prompt, req.model_id, req.temperature, req.max_tokens)
            except LLMRequestError:
                if attempt == self.network_attempts - 1:
                    raise
                self._sleep(self.backoff * 2**attempt)


def expand_query(req: ExpansionRequest, cache, client=None, offline=False) -> ExpandedQuery:
    """One-shot convenience wrapper around :class:`QueryExpander`."""
    return QueryExpander(cache, client, offline=offline).expand(req)


def inject_query_noise(records, fraction: float, seed: int) -> list[ExpandedQuery]:
    """Swap start/end descriptions on a seeded random subset of records.

    Exactly ``round(fraction * n)`` records (halves round up) are swapped;
    order is preserved.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    records = list(records)
    n = len(records)
    k = int(np.floor(fraction * n + 0.5))
    chosen = set(np.random.default_rng(seed).choice(n, size=k, replace=False).tolist()) if k else set()
    return [r.swap() if i in chosen else r for i, r in enumerate(records)]
