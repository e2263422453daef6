"""NDJSON wire protocol: one request line in, one response line out, until EOF."""

from __future__ import annotations

import json
from typing import Callable, Optional, TextIO

from .actions import parse_call
from .errors import AdapterError, ERR_PROTOCOL
from .session import AdapterSession, Observation

PROTOCOL_VERSION = 1


def _observation_msg(msg_id: int, obs: Observation) -> dict:
    return {"v": PROTOCOL_VERSION, "id": msg_id, "kind": "OBSERVATION",
            "a11y": obs.a11y, "url": obs.url, "done": obs.done}


def _error_msg(msg_id: int, code: str, detail: str) -> dict:
    return {"v": PROTOCOL_VERSION, "id": msg_id, "kind": "ERROR",
            "code": code, "detail": detail}


def handle_request(session: AdapterSession, request: dict,
                   last_id: int) -> tuple[dict, int]:
    """One exchange. Returns (response, new last_id); protocol faults don't advance."""
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
            obs = session.reset(request.get("url") or None)
            return _observation_msg(msg_id, obs), msg_id
        if kind == "STEP":
            name, params = parse_call(request.get("action", ""))
            obs = session.step(name, params)
            return _observation_msg(msg_id, obs), msg_id
        return _error_msg(msg_id, ERR_PROTOCOL, f"unknown kind {kind!r}"), msg_id
    except AdapterError as exc:
        return _error_msg(msg_id, exc.code, exc.detail), msg_id


def serve(session: AdapterSession, rfile: TextIO, wfile: TextIO,
          record: Optional[TextIO] = None) -> None:
    """Run the lock-step loop until EOF, optionally teeing exchanges to `record`."""
    last_id = 0
    for line in rfile:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError:
            request = None
            response = _error_msg(last_id, ERR_PROTOCOL, "request is not JSON")
        else:
            response, last_id = handle_request(session, request, last_id)
        wfile.write(json.dumps(response, ensure_ascii=False) + "\n")
        wfile.flush()
        if record is not None:
            record.write(json.dumps({"request": request, "response": response},
                                    ensure_ascii=False) + "\n")
            record.flush()


def read_transcript(rfile: TextIO) -> list:
    records = []
    for line in rfile:
        line = line.strip()
        if line:
            records.append(json.loads(line))
    return records


def check_transcript(session_factory: Callable[[], AdapterSession],
                     records: list) -> list:
    """Replay recorded requests on a fresh session; responses must match exactly.

    Returns (label, ok, detail) triples, one per record.
    """
    session = session_factory()
    last_id = 0
    results = []
    try:
        for i, record in enumerate(records):
            request = record.get("request")
            if request is None:
                response = _error_msg(last_id, ERR_PROTOCOL, "request is not JSON")
            else:
                response, last_id = handle_request(session, request, last_id)
            ok = response == record.get("response")
            detail = "" if ok else json.dumps(response, sort_keys=True)[:200]
            results.append((f"transcript-{i}", ok, detail))
    finally:
        session.close()
    return results
