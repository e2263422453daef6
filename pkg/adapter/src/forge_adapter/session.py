"""Lock-step browsing session: tabs, history, and primitive execution."""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from typing import Optional

from .actions import TERMINAL
from .drivers import Driver
from .errors import GroundError, NavError, NoSessionError
from .htmlpage import Page
from .policy import FetchPolicy


@dataclass(frozen=True)
class Observation:
    a11y: str
    url: str
    done: bool


@dataclass
class Tab:
    page: Page
    back: list = field(default_factory=list)     # urls
    forward: list = field(default_factory=list)  # urls


def _new_context_id() -> str:
    return f"ctx-{uuid.uuid4().hex[:12]}"


@dataclass
class AdapterSession:
    """One protocol connection's worth of browser state."""

    driver: Driver
    policy: FetchPolicy = field(default_factory=FetchPolicy)
    start_url: Optional[str] = None
    context_id: str = field(default_factory=_new_context_id)
    tabs: list = field(default_factory=list)
    focus: int = 0
    home_url: Optional[str] = None

    # -- state access --

    def _tab(self) -> Tab:
        if not self.tabs:
            raise NoSessionError("no session: send RESET first")
        return self.tabs[self.focus]

    @property
    def current_url(self) -> Optional[str]:
        return self.tabs[self.focus].page.url if self.tabs else None

    def observe(self, done: bool = False) -> Observation:
        page = self._tab().page
        return Observation(a11y=page.text, url=page.url, done=done)

    # -- navigation --

    def _fetch(self, url: str) -> Page:
        self.policy.clear(url)
        return self.driver.open(url)

    def _navigate(self, tab: Tab, url: str) -> None:
        page = self._fetch(url)
        tab.back.append(tab.page.url)
        tab.forward.clear()
        tab.page = page

    def reset(self, url: Optional[str] = None) -> Observation:
        target = url or self.start_url
        if not target:
            raise NavError("no target url: include one in RESET or serve with a start url")
        page = self._fetch(target)
        self.tabs = [Tab(page)]
        self.focus = 0
        self.home_url = page.url
        return self.observe()

    # -- stepping --

    def step(self, name: str, params: dict) -> Observation:
        tab = self._tab()

        if name == "tab_new":
            page = self._fetch(self.home_url)
            self.tabs.append(Tab(page))
            self.focus = len(self.tabs) - 1
        elif name == "tab_close":
            if len(self.tabs) > 1:
                self.tabs.pop(self.focus)
                self.focus = min(self.focus, len(self.tabs) - 1)
        elif name == "tab_focus":
            index = params["index"]
            if 0 <= index < len(self.tabs):
                self.focus = index
        elif name == "go_back":
            if tab.back:
                page = self._fetch(tab.back[-1])
                tab.forward.append(tab.page.url)
                tab.back.pop()
                tab.page = page
        elif name == "go_fwd":
            if tab.forward:
                page = self._fetch(tab.forward[-1])
                tab.back.append(tab.page.url)
                tab.forward.pop()
                tab.page = page
        elif name == "goto":
            self._navigate(tab, params["url"])
        elif name == "click":
            target = self.driver.click(tab.page, params["bid"])
            if target is not None:
                self._navigate(tab, target)
        elif name == "fill":
            self.driver.fill(tab.page, params["bid"], params["text"])
        elif name == "select_option":
            self.driver.select(tab.page, params["bid"], params["options"])
        elif name == "hover":
            if tab.page.node(params["bid"]) is None:
                raise GroundError(f"bid {params['bid']!r} is not on the current page")
        # mouse_*, keyboard_*, scroll, noop, and terminal messages leave the page as-is

        return self.observe(done=name in TERMINAL)

    def close(self) -> None:
        self.driver.close()
