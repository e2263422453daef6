"""Chat-completion access behind swappable providers.

Every pipeline talks to a GatewayHandle; tests script it, production points it
at an HTTP endpoint. Completions are plain text in, text out — structured
output is recovered by the extract_* helpers.
"""

import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Union

import requests


class Role(Enum):
    WORLD_MODEL = "WORLD_MODEL"
    AGENT = "AGENT"
    VALUE_JUDGE = "VALUE_JUDGE"
    SYNTH = "SYNTH"


class GatewayError(Exception):
    def __init__(self, kind: str, detail: str = "", transient: bool = False):
        super().__init__(f"{kind}: {detail}" if detail else kind)
        self.kind = kind
        self.transient = transient


class TagMissing(ValueError):
    pass


class ParseError(ValueError):
    pass


Messages = list  # list of {"role": str, "content": str}


# --- transcript -----------------------------------------------------------------------

@dataclass
class Transcript:
    """Append-only call log. Holds request/response pairs, never credentials."""

    records: list = field(default_factory=list)

    def append(self, role: Role, request: Messages, response: str, latency: float) -> None:
        self.records.append({
            "index": len(self.records),
            "role": role.value,
            "request": request,
            "response": response,
            "latency": latency,
        })

    def write_jsonl(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
                fh.write("\n")

    @classmethod
    def read_jsonl(cls, path: Union[str, Path]) -> "Transcript":
        t = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    t.records.append(json.loads(line))
        return t


# --- providers ------------------------------------------------------------------------

class ScriptedProvider:
    """Deterministic provider: FIFO queue first, then exact-match table.

    The table is keyed by the last message's content, which is where every
    pipeline puts the fully rendered prompt.
    """

    def __init__(self, queue: Optional[list] = None, table: Optional[dict] = None,
                 default: Optional[str] = None):
        self.queue = deque(queue or [])
        self.table = dict(table or {})
        self.default = default
        self.calls: list = []

    def complete(self, messages: Messages) -> str:
        self.calls.append(messages)
        if self.queue:
            item = self.queue.popleft()
            if isinstance(item, Exception):
                raise item
            return item
        key = messages[-1]["content"] if messages else ""
        if key in self.table:
            return self.table[key]
        if self.default is not None:
            return self.default
        raise GatewayError("script_exhausted", f"no scripted reply for: {key[:80]!r}")


class ReplayProvider:
    """Replays a recorded transcript; any request drift is an error."""

    def __init__(self, records: list, strict: bool = True):
        self.records = list(records)
        self.strict = strict
        self.cursor = 0

    @classmethod
    def from_jsonl(cls, path: Union[str, Path], strict: bool = True) -> "ReplayProvider":
        return cls(Transcript.read_jsonl(path).records, strict=strict)

    def complete(self, messages: Messages) -> str:
        if self.cursor >= len(self.records):
            raise GatewayError("replay_exhausted", f"call {self.cursor} beyond transcript")
        rec = self.records[self.cursor]
        self.cursor += 1
        if self.strict and rec["request"] != messages:
            raise GatewayError(
                "replay_divergence",
                f"call {rec['index']} request differs from the recording",
            )
        return rec["response"]


@dataclass
class HttpConfig:
    endpoint: str
    model: str
    key_env: str = ""
    temperature: float = 0.0
    max_tokens: int = 4096
    timeout: float = 120.0


class HttpProvider:
    """OpenAI-style chat-completions client. Refuses to run in test mode."""

    def __init__(self, config: HttpConfig, test_mode: bool = False):
        self.config = config
        self.test_mode = test_mode

    def complete(self, messages: Messages) -> str:
        if self.test_mode:
            raise GatewayError("network_disabled", "provider is in test mode")
        headers = {"Content-Type": "application/json"}
        if self.config.key_env:
            key = os.environ.get(self.config.key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        }
        try:
            resp = requests.post(self.config.endpoint, json=payload, headers=headers,
                                 timeout=self.config.timeout)
        except requests.RequestException as exc:
            raise GatewayError("network", str(exc), transient=True) from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise GatewayError("http_status", f"status {resp.status_code}", transient=True)
        if resp.status_code != 200:
            raise GatewayError("http_status", f"status {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise GatewayError("bad_response", str(exc)) from exc


def provider_from_config(cfg: dict, test_mode: bool = False):
    kind = cfg.get("kind", "")
    if kind == "scripted":
        return ScriptedProvider(queue=cfg.get("queue"), table=cfg.get("table"),
                                default=cfg.get("default"))
    if kind == "replay":
        return ReplayProvider.from_jsonl(cfg["path"], strict=cfg.get("strict", True))
    if kind == "http":
        return HttpProvider(
            HttpConfig(
                endpoint=cfg["endpoint"],
                model=cfg["model"],
                key_env=cfg.get("key_env", ""),
                temperature=cfg.get("temperature", 0.0),
                max_tokens=cfg.get("max_tokens", 4096),
                timeout=cfg.get("timeout", 120.0),
            ),
            test_mode=test_mode,
        )
    raise ValueError(f"unknown provider kind {kind!r}")


# --- handle ---------------------------------------------------------------------------

@dataclass
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 0.5
    factor: float = 2.0

    def delays(self):
        d = self.base_delay
        for _ in range(self.attempts - 1):
            yield d
            d *= self.factor


@dataclass
class RateLimit:
    requests: int
    interval: float  # seconds


class GatewayHandle:
    """One LLM role's door to a provider: retries, rate limit, transcript."""

    def __init__(self, provider, role: Role, retry: Optional[RetryPolicy] = None,
                 rate_limit: Optional[RateLimit] = None,
                 transcript: Optional[Transcript] = None,
                 clock: Optional[Callable[[], float]] = None,
                 sleep: Optional[Callable[[float], None]] = None):
        self.provider = provider
        self.role = role
        self.retry = retry or RetryPolicy()
        self.rate_limit = rate_limit
        self.transcript = transcript
        self._clock = clock or time.monotonic
        self._sleep = sleep or time.sleep
        self._lock = threading.Lock()
        self._window: deque = deque()
        self.calls = 0  # monotone counter of complete() invocations

    def _respect_rate_limit(self, window: deque) -> None:
        limit = self.rate_limit
        now = self._clock()
        while len(window) >= limit.requests and now - window[0] < limit.interval:
            self._sleep(limit.interval - (now - window[0]))
            now = self._clock()
        while window and now - window[0] >= limit.interval:
            window.popleft()
        window.append(now)

    def complete(self, messages: Messages) -> str:
        with self._lock:
            self.calls += 1
            if self.rate_limit is not None:
                self._respect_rate_limit(self._window)
        start = self._clock()
        delays = list(self.retry.delays())
        attempt = 0
        while True:
            try:
                text = self.provider.complete(messages)
                break
            except GatewayError as exc:
                if not exc.transient or attempt >= len(delays):
                    raise
                self._sleep(delays[attempt])
                attempt += 1
        if self.transcript is not None:
            with self._lock:
                self.transcript.append(self.role, messages, text, self._clock() - start)
        return text


# --- completion post-processing --------------------------------------------------------

def extract_tagged(completion: str, tag: str) -> str:
    """Inner text of the first balanced <tag>...</tag> pair."""
    open_t, close_t = f"<{tag}>", f"</{tag}>"
    start = completion.find(open_t)
    if start < 0:
        raise TagMissing(f"no <{tag}> in completion")
    pos = start + len(open_t)
    depth = 1
    while depth:
        next_open = completion.find(open_t, pos)
        next_close = completion.find(close_t, pos)
        if next_close < 0:
            raise TagMissing(f"<{tag}> never closed")
        if 0 <= next_open < next_close:
            depth += 1
            pos = next_open + len(open_t)
        else:
            depth -= 1
            pos = next_close + len(close_t)
    return completion[start + len(open_t) : pos - len(close_t)]


def extract_first_json(completion: str) -> dict:
    """First decodable JSON object substring, fences and prose ignored."""
    decoder = json.JSONDecoder()
    idx = completion.find("{")
    while idx >= 0:
        try:
            obj, _ = decoder.raw_decode(completion, idx)
        except ValueError:
            idx = completion.find("{", idx + 1)
            continue
        if isinstance(obj, dict):
            return obj
        idx = completion.find("{", idx + 1)
    raise ParseError("no JSON object in completion")
