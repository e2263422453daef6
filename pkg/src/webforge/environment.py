"""Environment abstraction: a deterministic mock site graph, the NDJSON wire
protocol that remote environments speak, and a conformance checker for both.

A site graph maps page ids to a11y trees and (page, canonical action) pairs
to successor pages. Stepping an unmapped action observes the same page again;
navigating into a fail page raises NAV_FAIL and leaves the session where it
was. One protocol connection is strictly lock-step.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

from .a11y import A11yError, A11yTree, parse_a11y_text, serialize_a11y_text
from .actions import (
    Action,
    ActionError,
    GroundingError,
    VisibilityError,
    parse_action,
    render_action,
    validate_against_state,
)

PROTOCOL_VERSION = 1

ERR_NAV_FAIL = "NAV_FAIL"
ERR_BAD_ACTION = "BAD_ACTION"
ERR_NO_SESSION = "NO_SESSION"
ERR_GROUNDING = "GROUNDING"
ERR_PROTOCOL = "PROTOCOL"


class SchemaError(ValueError):
    pass


class EnvError(Exception):
    code = ERR_PROTOCOL

    def __init__(self, detail: str = ""):
        super().__init__(f"{self.code}: {detail}" if detail else self.code)
        self.detail = detail


class EnvUnavailable(EnvError):
    code = ERR_NAV_FAIL


class NavigationFailure(EnvError):
    code = ERR_NAV_FAIL


class NoSession(EnvError):
    code = ERR_NO_SESSION


class ProtocolError(EnvError):
    code = ERR_PROTOCOL


@dataclass(frozen=True, slots=True)
class Observation:
    a11y: str
    url: str
    done: bool = False

    def tree(self) -> A11yTree:
        return parse_a11y_text(self.a11y)


# --- site graph ------------------------------------------------------------------------

@dataclass(frozen=True)
class SiteGraph:
    pages: dict  # page_id -> A11yTree
    edges: dict  # (page_id, canonical action string) -> page_id
    start: str
    goal_pages: frozenset
    fail_pages: frozenset = frozenset()

    def page_text(self, page_id: str) -> str:
        return serialize_a11y_text(self.pages[page_id])

    def page_url(self, page_id: str) -> str:
        for root in self.pages[page_id].roots:
            url = root.prop("url")
            if url is not None:
                return url
        return f"mock://{page_id}"


def load_site_graph(path: Union[str, Path]) -> SiteGraph:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not JSON: {exc.msg}") from exc
    return site_graph_from_obj(obj)


def site_graph_from_obj(obj: dict) -> SiteGraph:
    if not isinstance(obj, dict) or obj.get("v") != 1:
        raise SchemaError("site graph must be a JSON object with v=1")
    for key in ("start", "pages", "edges"):
        if key not in obj:
            raise SchemaError(f"missing key {key!r}")
    pages = {}
    for page_id, text in obj["pages"].items():
        try:
            pages[page_id] = parse_a11y_text(text)
        except (ValueError, A11yError) as exc:
            raise SchemaError(f"page {page_id!r}: {exc}") from exc
    start = obj["start"]
    if start not in pages:
        raise SchemaError(f"start page {start!r} not in pages")
    goal_pages = frozenset(obj.get("goal_pages", ()))
    fail_pages = frozenset(obj.get("fail_pages", ()))
    for name, group in (("goal", goal_pages), ("fail", fail_pages)):
        missing = group - pages.keys()
        if missing:
            raise SchemaError(f"{name} pages not in pages: {sorted(missing)}")
    edges = {}
    for i, edge in enumerate(obj["edges"]):
        src, action_text, dst = edge["from"], edge["action"], edge["to"]
        if src not in pages:
            raise SchemaError(f"edge {i}: unknown source page {src!r}")
        if dst not in pages:
            raise SchemaError(f"edge {i}: unknown target page {dst!r}")
        try:
            action = parse_action(action_text)
        except ActionError as exc:
            raise SchemaError(f"edge {i}: bad action: {exc}") from exc
        page_bids = pages[src].bids()
        for bid in action.bids():
            if bid not in page_bids:
                raise SchemaError(f"edge {i}: bid {bid!r} not present in page {src!r}")
        key = (src, render_action(action))
        if key in edges:
            raise SchemaError(f"edge {i}: duplicate edge {key}")
        edges[key] = dst
    return SiteGraph(pages=pages, edges=edges, start=start,
                     goal_pages=goal_pages, fail_pages=fail_pages)


def site_graph_to_obj(graph: SiteGraph) -> dict:
    return {
        "v": 1,
        "start": graph.start,
        "goal_pages": sorted(graph.goal_pages),
        "fail_pages": sorted(graph.fail_pages),
        "pages": {pid: serialize_a11y_text(tree) for pid, tree in graph.pages.items()},
        "edges": [
            {"from": src, "action": action, "to": dst}
            for (src, action), dst in graph.edges.items()
        ],
    }


# --- in-process mock environment ---------------------------------------------------------

@dataclass
class _Tab:
    page_id: str
    back: list = field(default_factory=list)
    forward: list = field(default_factory=list)


class MockEnv:
    """Deterministic environment over a SiteGraph, with tabs and history."""

    def __init__(self, graph: SiteGraph):
        self.graph = graph
        self._tabs: Optional[list] = None
        self._focus = 0

    # -- session plumbing --

    def _tab(self) -> _Tab:
        if self._tabs is None:
            raise NoSession("reset before stepping")
        return self._tabs[self._focus]

    def _resolve(self, url_or_page: str) -> str:
        if url_or_page in self.graph.pages:
            return url_or_page
        for page_id in self.graph.pages:
            if self.graph.page_url(page_id) == url_or_page:
                return page_id
        raise EnvUnavailable(f"unknown page {url_or_page!r}")

    def observe(self) -> Observation:
        tab = self._tab()
        return Observation(
            a11y=self.graph.page_text(tab.page_id),
            url=self.graph.page_url(tab.page_id),
            done=tab.page_id in self.graph.goal_pages,
        )

    def reset(self, url_or_page: Optional[str] = None) -> Observation:
        page_id = self._resolve(url_or_page) if url_or_page else self.graph.start
        if page_id in self.graph.fail_pages:
            raise NavigationFailure(f"page {page_id!r} fails to load")
        self._tabs = [_Tab(page_id)]
        self._focus = 0
        return self.observe()

    # -- stepping --

    def _navigate(self, tab: _Tab, target: str) -> None:
        if target in self.graph.fail_pages:
            raise NavigationFailure(f"page {target!r} fails to load")
        tab.back.append(tab.page_id)
        tab.forward.clear()
        tab.page_id = target

    def step(self, action: Action) -> Observation:
        tab = self._tab()
        name = action.primitive

        if name == "tab_new":
            self._tabs.append(_Tab(self.graph.start))
            self._focus = len(self._tabs) - 1
            return self.observe()
        if name == "tab_close":
            if len(self._tabs) > 1:
                self._tabs.pop(self._focus)
                self._focus = min(self._focus, len(self._tabs) - 1)
            return self.observe()
        if name == "tab_focus":
            index = action.arg("index")
            if 0 <= index < len(self._tabs):
                self._focus = index
            return self.observe()
        if name == "go_back":
            if tab.back:
                tab.forward.append(tab.page_id)
                tab.page_id = tab.back.pop()
            return self.observe()
        if name == "go_fwd":
            if tab.forward:
                tab.back.append(tab.page_id)
                tab.page_id = tab.forward.pop()
            return self.observe()

        key = (tab.page_id, render_action(action))
        if key in self.graph.edges:
            self._navigate(tab, self.graph.edges[key])
            return self.observe()

        if name == "goto":
            url = action.arg("url")
            if url in self.graph.pages:
                self._navigate(tab, url)
            return self.observe()

        validate_against_state(action, self.graph.pages[tab.page_id])
        return self.observe()


# --- NDJSON protocol -----------------------------------------------------------------

def _observation_msg(msg_id: int, obs: Observation) -> dict:
    return {"v": PROTOCOL_VERSION, "id": msg_id, "kind": "OBSERVATION",
            "a11y": obs.a11y, "url": obs.url, "done": obs.done}


def _error_msg(msg_id: int, code: str, detail: str) -> dict:
    return {"v": PROTOCOL_VERSION, "id": msg_id, "kind": "ERROR",
            "code": code, "detail": detail}


def handle_request(env, request: dict, last_id: int) -> tuple[dict, int]:
    """One lock-step protocol exchange. Returns (response, new last_id)."""
    msg_id = request.get("id")
    if not isinstance(msg_id, int):
        return _error_msg(last_id, ERR_PROTOCOL, "missing integer id"), last_id
    if request.get("v") != PROTOCOL_VERSION:
        return _error_msg(msg_id, ERR_PROTOCOL, "unsupported protocol version"), last_id
    if msg_id <= last_id:
        return _error_msg(msg_id, ERR_PROTOCOL,
                          f"id {msg_id} not greater than {last_id}"), last_id
    kind = request.get("kind")
    try:
        if kind == "RESET":
            obs = env.reset(request.get("url") or None)
            return _observation_msg(msg_id, obs), msg_id
        if kind == "STEP":
            try:
                action = parse_action(request.get("action", ""))
            except ActionError as exc:
                return _error_msg(msg_id, ERR_BAD_ACTION, str(exc)), msg_id
            obs = env.step(action)
            return _observation_msg(msg_id, obs), msg_id
        return _error_msg(msg_id, ERR_PROTOCOL, f"unknown kind {kind!r}"), msg_id
    except (GroundingError, VisibilityError) as exc:
        return _error_msg(msg_id, ERR_GROUNDING, str(exc)), msg_id
    except EnvError as exc:
        return _error_msg(msg_id, exc.code, exc.detail), msg_id


def serve(env, rfile, wfile) -> None:
    """Run the lock-step NDJSON loop until EOF on rfile."""
    last_id = 0
    for line in rfile:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError:
            response = _error_msg(last_id, ERR_PROTOCOL, "request is not JSON")
        else:
            response, last_id = handle_request(env, request, last_id)
        wfile.write(json.dumps(response, ensure_ascii=False) + "\n")
        wfile.flush()


class EnvClient:
    """Client half of the protocol; raises EnvError subclasses on ERROR replies.

    ``transport`` is any callable dict -> dict (in-process tests) or an object
    with writable/readable line streams (subprocess stdio).
    """

    def __init__(self, transport: Callable[[dict], dict]):
        self._transport = transport
        self._next_id = 1

    @classmethod
    def over_streams(cls, wfile, rfile) -> "EnvClient":
        def transport(request: dict) -> dict:
            wfile.write(json.dumps(request, ensure_ascii=False) + "\n")
            wfile.flush()
            line = rfile.readline()
            if not line:
                raise ProtocolError("connection closed")
            return json.loads(line)
        return cls(transport)

    def _rpc(self, body: dict) -> Observation:
        request = {"v": PROTOCOL_VERSION, "id": self._next_id, **body}
        response = self._transport(request)
        if response.get("id") != self._next_id:
            raise ProtocolError(
                f"response id {response.get('id')} != request id {self._next_id}")
        self._next_id += 1
        if response.get("kind") == "OBSERVATION":
            return Observation(a11y=response["a11y"], url=response["url"],
                               done=bool(response["done"]))
        if response.get("kind") == "ERROR":
            code = response.get("code", ERR_PROTOCOL)
            detail = response.get("detail", "")
            if code == ERR_GROUNDING:
                raise GroundingError(detail)
            err = {ERR_NAV_FAIL: NavigationFailure,
                   ERR_NO_SESSION: NoSession}.get(code, ProtocolError)
            raise err(detail)
        raise ProtocolError(f"unknown response kind {response.get('kind')!r}")

    def reset(self, url: Optional[str] = None) -> Observation:
        body = {"kind": "RESET"}
        if url:
            body["url"] = url
        return self._rpc(body)

    def step(self, action: Action) -> Observation:
        return self._rpc({"kind": "STEP", "action": render_action(action)})


# --- conformance ------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def run_conformance(send: Callable[[dict], dict],
                    reset_url: Optional[str] = None) -> list[CheckResult]:
    """Generic protocol checks any conforming environment must pass.

    ``send`` performs one raw request/response exchange on a fresh connection.
    """
    results = []
    n = 0

    def check(name: str, ok: bool, detail: str = ""):
        results.append(CheckResult(name, bool(ok), detail))

    def nxt() -> int:
        nonlocal n
        n += 1
        return n

    # 1. STEP before RESET is refused
    resp = send({"v": 1, "id": nxt(), "kind": "STEP", "action": "noop()"})
    check("step-before-reset", resp.get("kind") == "ERROR"
          and resp.get("code") == ERR_NO_SESSION, json.dumps(resp)[:200])

    # 2. RESET answers an observation whose tree parses cleanly
    body = {"v": 1, "id": nxt(), "kind": "RESET"}
    if reset_url:
        body["url"] = reset_url
    resp = send(body)
    ok = resp.get("kind") == "OBSERVATION"
    parse_detail = ""
    if ok:
        try:
            parse_a11y_text(resp["a11y"])
        except (ValueError, A11yError) as exc:
            ok, parse_detail = False, str(exc)
    check("reset-observation-parses", ok, parse_detail or json.dumps(resp)[:200])
    baseline = resp.get("a11y") if resp.get("kind") == "OBSERVATION" else None

    # 3. ids echo back and lock-step holds
    check("response-id-matches", resp.get("id") == n, f"got {resp.get('id')}")

    # 4. noop leaves the page unchanged
    resp = send({"v": 1, "id": nxt(), "kind": "STEP", "action": "noop()"})
    check("noop-is-stationary", resp.get("kind") == "OBSERVATION"
          and resp.get("a11y") == baseline, json.dumps(resp)[:200])

    # 5. unparseable action text
    resp = send({"v": 1, "id": nxt(), "kind": "STEP", "action": "click("})
    check("bad-action-code", resp.get("kind") == "ERROR"
          and resp.get("code") == ERR_BAD_ACTION, json.dumps(resp)[:200])

    # 6. grounded-but-absent bid
    resp = send({"v": 1, "id": nxt(), "kind": "STEP", "action": "click('zz_no_such_bid')"})
    check("grounding-code", resp.get("kind") == "ERROR"
          and resp.get("code") == ERR_GROUNDING, json.dumps(resp)[:200])

    # 7. stale (non-increasing) id
    resp = send({"v": 1, "id": n, "kind": "STEP", "action": "noop()"})
    check("stale-id-refused", resp.get("kind") == "ERROR"
          and resp.get("code") == ERR_PROTOCOL, json.dumps(resp)[:200])

    # 8. wrong protocol version
    resp = send({"v": 99, "id": nxt(), "kind": "STEP", "action": "noop()"})
    check("version-checked", resp.get("kind") == "ERROR"
          and resp.get("code") == ERR_PROTOCOL, json.dumps(resp)[:200])

    return results


def record_transcript(send: Callable[[dict], dict], requests: list) -> list:
    """Drive a request script, returning interleaved request/response records."""
    records = []
    for request in requests:
        response = send(request)
        records.append({"request": request, "response": response})
    return records


def check_transcript(send: Callable[[dict], dict], records: list) -> list[CheckResult]:
    """Replay recorded requests; every response must match byte-for-byte."""
    results = []
    for i, rec in enumerate(records):
        response = send(rec["request"])
        ok = response == rec["response"]
        detail = "" if ok else (
            f"expected {json.dumps(rec['response'], sort_keys=True)[:200]} "
            f"got {json.dumps(response, sort_keys=True)[:200]}")
        results.append(CheckResult(f"transcript-{i}", ok, detail))
    return results
