"""Page drivers: fetch documents and apply element-level effects to snapshots."""

from __future__ import annotations

import urllib.error
import urllib.request
from typing import Optional, Protocol
from urllib.parse import urlsplit

from .errors import GroundError, NavError
from .htmlpage import (Page, TEXT_FIELD_ROLES, build_page, choose_option,
                       choose_radio, form_target, toggle_checkbox)
from .policy import USER_AGENT
from .snapshot import SnapNode


class Driver(Protocol):
    def open(self, url: str) -> Page: ...

    # returns a navigation target URL, or None after an in-page effect
    def click(self, page: Page, bid: str) -> Optional[str]: ...

    def fill(self, page: Page, bid: str, text: str) -> None: ...

    def select(self, page: Page, bid: str, options: tuple) -> None: ...

    def close(self) -> None: ...


def _node_or_raise(page: Page, bid: str) -> SnapNode:
    node = page.node(bid)
    if node is None:
        raise GroundError(f"bid {bid!r} is not on the current page")
    return node


class StaticPageDriver:
    """Script-free driver: plain HTTP fetches, HTML parsing, in-memory form state."""

    def __init__(self, timeout: float = 10.0, user_agent: str = USER_AGENT):
        self.timeout = timeout
        self.user_agent = user_agent

    def open(self, url: str) -> Page:
        scheme = urlsplit(url).scheme
        if scheme not in ("http", "https"):
            raise NavError(f"unsupported url scheme {scheme!r}")
        request = urllib.request.Request(url, headers={"User-Agent": self.user_agent})
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                charset = response.headers.get_content_charset() or "utf-8"
                body = response.read().decode(charset, errors="replace")
                final_url = response.geturl()
        except urllib.error.HTTPError as exc:
            raise NavError(f"HTTP {exc.code} fetching {url}")
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise NavError(f"fetch failed for {url}: {exc}")
        return build_page(body, final_url)

    def click(self, page: Page, bid: str) -> Optional[str]:
        node = _node_or_raise(page, bid)
        element = page.element_of.get(bid)
        if element is not None and "disabled" in element.attrs:
            return None
        if node.role == "link":
            return node.props.get("url")
        if node.role == "button":
            return form_target(page, element) if element is not None else None
        if node.role == "checkbox":
            toggle_checkbox(page, node)
        elif node.role == "radio":
            choose_radio(page, bid)
        elif node.role == "option" and element is not None:
            select_el = element.ancestor("select")
            select_node = page.node_of.get(id(select_el)) if select_el else None
            if select_node is not None:
                choose_option(page, select_node, [node.name])
        return None

    def fill(self, page: Page, bid: str, text: str) -> None:
        node = _node_or_raise(page, bid)
        if node.role not in TEXT_FIELD_ROLES:
            raise GroundError(f"bid {bid!r} ({node.role}) is not a text field")
        if text:
            node.props["value"] = text
        else:
            node.props.pop("value", None)
        page.refresh()

    def select(self, page: Page, bid: str, options: tuple) -> None:
        node = _node_or_raise(page, bid)
        element = page.element_of.get(bid)
        if node.role == "option" and element is not None:
            select_el = element.ancestor("select")
            node = page.node_of.get(id(select_el)) if select_el else None
        if node is None or node.role != "combobox":
            raise GroundError(f"bid {bid!r} is not a selectable control")
        try:
            choose_option(page, node, list(options))
        except KeyError as exc:
            raise GroundError(f"no option named {exc.args[0]!r} under {bid!r}")

    def close(self) -> None:
        pass


# driver-native role names that differ from the snapshot vocabulary
PLAYWRIGHT_ROLE_MAP = {
    "text": "StaticText",
    "WebArea": "RootWebArea",
    "push button": "button",
    "text field": "textbox",
    "combo box": "combobox",
    "list box option": "option",
}


class PlaywrightDriver:
    """Real-browser driver over Playwright's accessibility snapshots.

    Thin by design: element effects run through role+name locators, and any
    click that changes the page URL is reported as a navigation target so the
    session re-opens it under its own fetch policy.
    """

    def __init__(self, timeout: float = 10.0, user_agent: str = USER_AGENT):
        from playwright.sync_api import sync_playwright  # deferred: optional extra

        self.timeout = timeout
        self._manager = sync_playwright().start()
        self._browser = self._manager.chromium.launch()
        self._page = self._browser.new_page(user_agent=user_agent)

    def open(self, url: str) -> Page:
        from playwright.sync_api import Error as PlaywrightError

        try:
            self._page.goto(url, timeout=self.timeout * 1000)
        except PlaywrightError as exc:
            raise NavError(f"navigation failed for {url}: {exc}")
        return self._snapshot()

    def _snapshot(self) -> Page:
        from .snapshot import assign_bids, render

        raw = self._page.accessibility.snapshot(interesting_only=True) or {}
        root = self._convert(raw)
        root.role = "RootWebArea"
        root.props["url"] = self._page.url
        page = Page(url=self._page.url, title=raw.get("name", ""), root=root)
        page.bids = assign_bids(root)
        page.text = render(root)
        return page

    def _convert(self, raw: dict) -> SnapNode:
        role = PLAYWRIGHT_ROLE_MAP.get(raw.get("role", ""), raw.get("role", "generic"))
        node = SnapNode(role=role, name=raw.get("name", ""))
        if raw.get("checked") is True:
            node.flags.add("checked")
        if raw.get("selected") is True:
            node.flags.add("selected")
        if raw.get("disabled") is True:
            node.flags.add("disabled")
        value = raw.get("value")
        if value not in (None, ""):
            node.props["value"] = str(value)
        node.children = [self._convert(child) for child in raw.get("children", ())]
        return node

    def _locate(self, page: Page, bid: str):
        node = _node_or_raise(page, bid)
        return node, self._page.get_by_role(node.role, name=node.name or None).first

    def click(self, page: Page, bid: str) -> Optional[str]:
        before = self._page.url
        _, locator = self._locate(page, bid)
        locator.click(timeout=self.timeout * 1000)
        self._page.wait_for_load_state()
        return self._page.url if self._page.url != before else None

    def fill(self, page: Page, bid: str, text: str) -> None:
        node, locator = self._locate(page, bid)
        if node.role not in TEXT_FIELD_ROLES:
            raise GroundError(f"bid {bid!r} ({node.role}) is not a text field")
        locator.fill(text, timeout=self.timeout * 1000)
        node.props["value"] = text
        page.refresh()

    def select(self, page: Page, bid: str, options: tuple) -> None:
        node, locator = self._locate(page, bid)
        if node.role != "combobox":
            raise GroundError(f"bid {bid!r} is not a selectable control")
        locator.select_option(label=list(options), timeout=self.timeout * 1000)
        node.props["value"] = options[-1]
        page.refresh()

    def close(self) -> None:
        self._browser.close()
        self._manager.stop()


def make_driver(kind: str, timeout: float = 10.0,
                user_agent: str = USER_AGENT) -> Driver:
    if kind == "static":
        return StaticPageDriver(timeout=timeout, user_agent=user_agent)
    if kind == "playwright":
        return PlaywrightDriver(timeout=timeout, user_agent=user_agent)
    raise ValueError(f"unknown driver kind {kind!r}")
