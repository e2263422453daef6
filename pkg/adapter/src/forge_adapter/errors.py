"""Adapter failure types, each tied to a wire-protocol error code."""

from __future__ import annotations

ERR_NAV_FAIL = "NAV_FAIL"
ERR_GROUNDING = "GROUNDING"
ERR_BAD_ACTION = "BAD_ACTION"
ERR_NO_SESSION = "NO_SESSION"
ERR_PROTOCOL = "PROTOCOL"


class AdapterError(Exception):
    code = ERR_PROTOCOL

    @property
    def detail(self) -> str:
        return str(self)


class NavError(AdapterError):
    code = ERR_NAV_FAIL


class GroundError(AdapterError):
    code = ERR_GROUNDING


class BadActionError(AdapterError):
    code = ERR_BAD_ACTION


class NoSessionError(AdapterError):
    code = ERR_NO_SESSION
