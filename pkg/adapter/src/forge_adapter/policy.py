"""Fetch policy: sensitive-URL blocking, robots.txt respect, per-host pacing."""

from __future__ import annotations

import re
import time
import urllib.robotparser
from dataclasses import dataclass, field
from typing import Callable, Optional
from urllib.parse import urlsplit, urlunsplit

from .errors import NavError

USER_AGENT = "forge-adapter/0.1"

# payment and login surfaces are off-limits unless explicitly allowed
DEFAULT_BLOCKED = (
    r"/log-?in\b",
    r"/log-?out\b",
    r"/sign-?in\b",
    r"/sign-?up\b",
    r"/register\b",
    r"/auth(?:[/?#]|$)",
    r"/account/log-?in\b",
    r"/checkout\b",
    r"/payments?\b",
    r"/billing\b",
    r"/pay(?:[/?#]|$)",
    r"[?&](?:card(?:_?number)?|cvv|cvc|iban)=",
    r"//[^/]*\bpaypal\.com",
    r"//[^/]*\bstripe\.com",
)


def compile_blocklist(extra: tuple = (), allow_sensitive: bool = False):
    patterns = (() if allow_sensitive else DEFAULT_BLOCKED) + tuple(extra)
    return tuple(re.compile(p, re.IGNORECASE) for p in patterns)


def blocked_reason(url: str, blocklist) -> Optional[str]:
    for pattern in blocklist:
        if pattern.search(url):
            return pattern.pattern
    return None


@dataclass
class Politeness:
    respect_robots: bool = False
    host_delay: float = 0.0
    user_agent: str = USER_AGENT


class RobotsCache:
    """One robots.txt verdict source per host; unreachable files allow all."""

    def __init__(self, user_agent: str = USER_AGENT):
        self.user_agent = user_agent
        self._parsers: dict = {}

    def can_fetch(self, url: str) -> bool:
        parts = urlsplit(url)
        host = parts.netloc
        if host not in self._parsers:
            robots_url = urlunsplit((parts.scheme, host, "/robots.txt", "", ""))
            parser = urllib.robotparser.RobotFileParser(robots_url)
            try:
                parser.read()
            except OSError:
                parser.allow_all = True
            self._parsers[host] = parser
        return self._parsers[host].can_fetch(self.user_agent, url)


class HostThrottle:
    """Spaces consecutive fetches to the same host at least `delay` apart."""

    def __init__(self, delay: float,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.delay = delay
        self._clock = clock
        self._sleep = sleep
        self._last: dict = {}

    def wait(self, url: str) -> None:
        if self.delay <= 0:
            return
        host = urlsplit(url).netloc
        now = self._clock()
        due = self._last.get(host, float("-inf")) + self.delay
        if due > now:
            self._sleep(due - now)
            now = self._clock()
        self._last[host] = now


@dataclass
class FetchPolicy:
    """Everything a navigation must clear before the driver touches the network."""

    politeness: Politeness = field(default_factory=Politeness)
    blocklist: tuple = ()
    robots: Optional[RobotsCache] = None
    throttle: Optional[HostThrottle] = None

    def __post_init__(self):
        if self.robots is None:
            self.robots = RobotsCache(self.politeness.user_agent)
        if self.throttle is None:
            self.throttle = HostThrottle(self.politeness.host_delay)

    def clear(self, url: str) -> None:
        """Raise NavError if the URL may not be fetched; otherwise pace and return."""
        reason = blocked_reason(url, self.blocklist)
        if reason is not None:
            raise NavError(f"blocked: url matches sensitive pattern {reason}")
        if self.politeness.respect_robots and not self.robots.can_fetch(url):
            raise NavError(f"robots.txt disallows {url}")
        self.throttle.wait(url)
