"""Shared fixtures: a local static site, subprocess pipes, and session builders."""

from __future__ import annotations

import functools
import http.server
import json
import re
import shutil
import subprocess
import sys
import threading
from pathlib import Path

import pytest

from forge_adapter.drivers import StaticPageDriver
from forge_adapter.policy import FetchPolicy, Politeness, compile_blocklist
from forge_adapter.session import AdapterSession

SITE_DIR = Path(__file__).parent / "fixture_site"


class _QuietHandler(http.server.SimpleHTTPRequestHandler):
    def log_message(self, *args):
        pass


@pytest.fixture(scope="session")
def site():
    """Base URL of the locally served fixture site."""
    handler = functools.partial(_QuietHandler, directory=str(SITE_DIR))
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    thread.join(timeout=5)


@pytest.fixture(scope="session")
def forge_bin():
    path = shutil.which("forge")
    assert path, "the forge CLI must be installed for adapter tests"
    return path


def make_session(start_url=None, respect_robots=False, host_delay=0.0,
                 allow_sensitive=False, extra_blocks=()) -> AdapterSession:
    politeness = Politeness(respect_robots=respect_robots, host_delay=host_delay)
    policy = FetchPolicy(politeness=politeness,
                         blocklist=compile_blocklist(tuple(extra_blocks),
                                                     allow_sensitive=allow_sensitive))
    return AdapterSession(driver=StaticPageDriver(), policy=policy,
                          start_url=start_url)


@pytest.fixture
def session_factory():
    return make_session


class AdapterPipe:
    """One serve subprocess with a lock-step send/receive helper."""

    def __init__(self, *extra_args: str):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "forge_adapter", "serve", *extra_args],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1)
        self.next_id = 1

    def send_line(self, line: str) -> dict:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        return json.loads(self.proc.stdout.readline())

    def send(self, body: dict) -> dict:
        return self.send_line(json.dumps(body, ensure_ascii=False))

    def rpc(self, kind: str, **fields) -> dict:
        body = {"v": 1, "id": self.next_id, "kind": kind, **fields}
        self.next_id += 1
        return self.send(body)

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


@pytest.fixture
def adapter_pipe():
    pipes = []

    def spawn(*extra_args: str) -> AdapterPipe:
        pipe = AdapterPipe(*extra_args)
        pipes.append(pipe)
        return pipe

    yield spawn
    for pipe in pipes:
        pipe.close()


_LINE_RE = re.compile(r"^\s*\[([^\]]+)\] (\S+)(?: '((?:[^'\\]|\\.)*)')?")


def _bids_of(a11y: str, role: str, name: str | None = None) -> list:
    """Bids of nodes with the given role (and name) in observation order."""
    found = []
    for line in a11y.splitlines():
        match = _LINE_RE.match(line)
        if not match:
            continue
        bid, line_role, line_name = match.groups()
        if line_role != role:
            continue
        if name is not None and (line_name or "") != name:
            continue
        found.append(bid)
    return found


@pytest.fixture
def find_bids():
    return _bids_of
