"""Environment adapter: real web pages behind the forge NDJSON wire protocol.

The package is deliberately free of any dependency on the core library; the
only shared surface is the wire protocol itself and the snapshot text format.
"""

from .actions import parse_call
from .drivers import PlaywrightDriver, StaticPageDriver, make_driver
from .errors import (AdapterError, BadActionError, GroundError, NavError,
                     NoSessionError)
from .htmlpage import Page, build_page
from .policy import FetchPolicy, HostThrottle, Politeness, RobotsCache
from .protocol import PROTOCOL_VERSION, check_transcript, handle_request, serve
from .session import AdapterSession, Observation, Tab
from .snapshot import SnapNode, render

__version__ = "0.1.0"

__all__ = [
    "AdapterError", "AdapterSession", "BadActionError", "FetchPolicy",
    "GroundError", "HostThrottle", "NavError", "NoSessionError", "Observation",
    "Page", "PlaywrightDriver", "Politeness", "PROTOCOL_VERSION", "RobotsCache",
    "SnapNode", "StaticPageDriver", "Tab", "build_page", "check_transcript",
    "handle_request", "make_driver", "parse_call", "render", "serve",
]
