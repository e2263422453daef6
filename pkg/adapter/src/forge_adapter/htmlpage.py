"""Static-HTML page model: element tree, role mapping, and snapshot building."""

from __future__ import annotations

from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import Optional
from urllib.parse import urlencode, urljoin, urlsplit, urlunsplit

from .snapshot import SnapNode, assign_bids, render, safe_role

VOID_TAGS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link",
    "meta", "param", "source", "track", "wbr",
})

# closing the previous sibling is implied for these when the same tag reopens
SELF_SIBLING_TAGS = frozenset({"li", "option", "p", "tr", "td", "th", "dd", "dt"})

SKIP_TAGS = frozenset({
    "base", "br", "col", "colgroup", "head", "hr", "link", "meta",
    "noscript", "script", "style", "svg", "template", "title",
})

# inline markup dissolves into the surrounding text flow
INLINE_TAGS = frozenset({"b", "code", "em", "i", "s", "small", "strong", "sub", "sup", "u"})

TAG_ROLES = {
    "button": "button",
    "select": "combobox",
    "option": "option",
    "textarea": "textbox",
    "ul": "list",
    "ol": "list",
    "li": "listitem",
    "table": "table",
    "tr": "row",
    "td": "cell",
    "th": "columnheader",
    "nav": "navigation",
    "main": "main",
    "header": "banner",
    "footer": "contentinfo",
    "form": "form",
    "p": "paragraph",
    "h1": "heading", "h2": "heading", "h3": "heading",
    "h4": "heading", "h5": "heading", "h6": "heading",
}

INPUT_ROLES = {
    "": "textbox",
    "text": "textbox",
    "email": "textbox",
    "url": "textbox",
    "tel": "textbox",
    "number": "textbox",
    "password": "textbox",
    "search": "searchbox",
    "checkbox": "checkbox",
    "radio": "radio",
    "submit": "button",
    "button": "button",
    "reset": "button",
}

# name is the flattened content; element children do not render separately
LEAF_ROLES = frozenset({"link", "button", "heading", "option", "image"})

VISIBLE_ROLES = frozenset({
    "link", "button", "textbox", "searchbox", "checkbox", "radio",
    "combobox", "option",
})

TEXT_FIELD_ROLES = frozenset({"textbox", "searchbox"})


@dataclass
class Element:
    tag: str
    attrs: dict
    parent: Optional["Element"] = None
    children: list = field(default_factory=list)  # Element | str

    def attr(self, key: str, default: str = "") -> str:
        value = self.attrs.get(key)
        return default if value is None else value

    def ancestor(self, tag: str) -> Optional["Element"]:
        current = self.parent
        while current is not None:
            if current.tag == tag:
                return current
            current = current.parent
        return None

    def walk(self):
        yield self
        for child in self.children:
            if isinstance(child, Element):
                yield from child.walk()


class _TreeBuilder(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.root = Element("#document", {})
        self._stack = [self.root]
        self._title_parts: list = []
        self._in_title = False

    def _open(self, tag: str, attrs) -> Element:
        attr_map: dict = {}
        for key, value in attrs:  # first occurrence wins, as browsers do
            attr_map.setdefault(key, "" if value is None else value)
        parent = self._stack[-1]
        element = Element(tag, attr_map, parent=parent)
        parent.children.append(element)
        return element

    def handle_starttag(self, tag, attrs):
        if tag == "title":
            self._in_title = True
            return
        if tag in SELF_SIBLING_TAGS and self._stack[-1].tag == tag:
            self._stack.pop()
        element = self._open(tag, attrs)
        if tag not in VOID_TAGS:
            self._stack.append(element)

    def handle_startendtag(self, tag, attrs):
        if tag != "title":
            self._open(tag, attrs)

    def handle_endtag(self, tag):
        if tag == "title":
            self._in_title = False
            return
        for i in range(len(self._stack) - 1, 0, -1):
            if self._stack[i].tag == tag:
                del self._stack[i:]
                return
        # stray close tag: ignore

    def handle_data(self, data):
        if self._in_title:
            self._title_parts.append(data)
        elif data:
            self._stack[-1].children.append(data)

    @property
    def title(self) -> str:
        return _collapse("".join(self._title_parts))


def _collapse(text: str) -> str:
    return " ".join(text.split())


def parse_html(text: str) -> tuple[Element, str]:
    builder = _TreeBuilder()
    builder.feed(text)
    builder.close()
    return builder.root, builder.title


def flat_text(element: Element) -> str:
    chunks: list = []

    def visit(el: Element):
        if el.tag in SKIP_TAGS:
            return
        for child in el.children:
            if isinstance(child, str):
                chunks.append(child)
            else:
                visit(child)

    visit(element)
    return _collapse(" ".join(chunks))


# --- snapshot assembly ----------------------------------------------------------------


@dataclass
class Page:
    """One navigated document; bids stay fixed for its whole lifetime."""

    url: str
    title: str
    root: SnapNode
    bids: dict = field(default_factory=dict)        # bid -> SnapNode
    element_of: dict = field(default_factory=dict)  # bid -> Element | None
    node_of: dict = field(default_factory=dict)     # id(Element) -> SnapNode
    text: str = ""

    def refresh(self) -> None:
        self.text = render(self.root)

    def node(self, bid: str) -> Optional[SnapNode]:
        return self.bids.get(bid)


class _SnapBuilder:
    def __init__(self, url: str, labels: dict):
        self.url = url
        self.labels = labels  # control id -> label text
        self.pairs: list = []  # (SnapNode, Element | None)

    def _node(self, element: Optional[Element], role: str, name: str = "",
              **props) -> SnapNode:
        node = SnapNode(role=role, name=name, props=dict(props))
        if role in VISIBLE_ROLES:
            node.flags.add("visible")
        self.pairs.append((node, element))
        return node

    def _control_name(self, el: Element) -> str:
        for candidate in (el.attr("aria-label"),
                          self.labels.get(el.attr("id")),
                          el.attr("placeholder"),
                          el.attr("name")):
            if candidate:
                return _collapse(candidate)
        return ""

    def _content_name(self, el: Element) -> str:
        return _collapse(el.attr("aria-label")) or flat_text(el)

    def _resolve_role(self, el: Element) -> Optional[str]:
        explicit = el.attr("role")
        if explicit:
            return safe_role(explicit)
        if el.tag == "a":
            return "link" if el.attr("href") else "generic"
        if el.tag == "img":
            return "image" if el.attr("alt") else None
        if el.tag == "input":
            return INPUT_ROLES.get(el.attr("type").lower())
        return TAG_ROLES.get(el.tag, "generic")

    def build(self, el: Element) -> list:
        """Snapshot nodes for one element; may be empty (skipped subtree)."""
        if el.tag in SKIP_TAGS or "hidden" in el.attrs:
            return []
        if el.attr("aria-hidden") == "true":
            return []
        if el.tag in INLINE_TAGS:
            return self.children(el)

        role = self._resolve_role(el)
        if role is None:
            return []

        if role == "combobox":
            return [self._select(el)]
        if role in LEAF_ROLES:
            return [self._leaf(el, role)]
        if role in ("textbox", "searchbox", "checkbox", "radio"):
            return [self._control(el, role)]

        node = self._node(el, role)
        node.children = self.children(el)
        if role == "generic" and not node.name and not node.children:
            self.pairs.remove((node, el))
            return []
        return [node]

    def _leaf(self, el: Element, role: str) -> SnapNode:
        if el.tag == "img":
            name = _collapse(el.attr("alt"))
        elif role == "button" and el.tag == "input":
            name = _collapse(el.attr("aria-label")) or _collapse(el.attr("value"))
        else:
            name = self._content_name(el) or _collapse(el.attr("value"))
        node = self._node(el, role, name)
        if role == "link":
            node.props["url"] = urljoin(self.url, el.attr("href"))
        if role == "heading" and len(el.tag) == 2 and el.tag[1].isdigit():
            node.props["level"] = el.tag[1]
        if role == "option" and "selected" in el.attrs:
            node.flags.add("selected")
        return node

    def _control(self, el: Element, role: str) -> SnapNode:
        node = self._node(el, role, self._control_name(el))
        if role in TEXT_FIELD_ROLES:
            value = el.attr("value") if el.tag == "input" else flat_text(el)
            if value:
                node.props["value"] = value
        elif "checked" in el.attrs:
            node.flags.add("checked")
        return node

    def _select(self, el: Element) -> SnapNode:
        node = self._node(el, "combobox", self._control_name(el))
        options = [child for child in el.walk()
                   if child is not el and child.tag == "option"]
        chosen = None
        for opt in options:
            opt_node = self._leaf(opt, "option")
            node.children.append(opt_node)
            if "selected" in opt.attrs and chosen is None:
                chosen = opt_node
        if chosen is None and node.children:
            chosen = node.children[0]
        if chosen is not None:
            chosen.flags.add("selected")
            node.props["value"] = chosen.name
        return node

    def children(self, el: Element) -> list:
        nodes: list = []
        for child in el.children:
            if isinstance(child, str):
                text = _collapse(child)
                if text:
                    nodes.append(self._node(None, "StaticText", text))
            else:
                nodes.extend(self.build(child))
        return nodes


def _find_tag(root: Element, tag: str) -> Optional[Element]:
    for el in root.walk():
        if el.tag == tag:
            return el
    return None


def build_page(html_text: str, url: str) -> Page:
    root_el, title = parse_html(html_text)
    labels = {el.attr("for"): flat_text(el)
              for el in root_el.walk() if el.tag == "label" and el.attr("for")}
    builder = _SnapBuilder(url, labels)
    body = _find_tag(root_el, "body") or root_el
    root_node = SnapNode("RootWebArea", name=title or url, props={"url": url})
    builder.pairs.append((root_node, None))
    root_node.children = builder.children(body)
    page = Page(url=url, title=title, root=root_node)
    page.bids = assign_bids(root_node)
    for node, element in builder.pairs:
        page.element_of[node.bid] = element
        if element is not None:
            page.node_of[id(element)] = node
    page.refresh()
    return page


# --- in-page state changes --------------------------------------------------------


def form_target(page: Page, el: Element) -> Optional[str]:
    """URL a submit click navigates to, with GET form data as the query string."""
    form = el.ancestor("form")
    action = el.attr("formaction") or (form.attr("action") if form else "")
    if form is None and not action:
        return None
    base = urljoin(page.url, action) if action else page.url
    scheme, netloc, path, _, fragment = urlsplit(base)
    query = ""
    if form is not None and form.attr("method").lower() != "post":
        query = urlencode(_form_data(page, form))
    return urlunsplit((scheme, netloc, path, query, fragment))


def _form_data(page: Page, form: Element) -> list:
    pairs: list = []
    for el in form.walk():
        name = el.attr("name")
        if not name:
            continue
        node = page.node_of.get(id(el))
        if el.tag == "input" and el.attr("type").lower() == "hidden":
            pairs.append((name, el.attr("value")))
        elif node is None:
            continue
        elif node.role in TEXT_FIELD_ROLES:
            pairs.append((name, node.props.get("value", "")))
        elif node.role in ("checkbox", "radio"):
            if "checked" in node.flags:
                pairs.append((name, el.attr("value") or "on"))
        elif node.role == "combobox":
            for opt_el, opt_node in _options_of(page, el):
                if "selected" in opt_node.flags:
                    pairs.append((name, opt_el.attr("value") or opt_node.name))
    return pairs


def _options_of(page: Page, select_el: Element) -> list:
    found = []
    for el in select_el.walk():
        if el is not select_el and el.tag == "option":
            node = page.node_of.get(id(el))
            if node is not None:
                found.append((el, node))
    return found


def toggle_checkbox(page: Page, node: SnapNode) -> None:
    node.flags.symmetric_difference_update({"checked"})
    page.refresh()


def choose_radio(page: Page, bid: str) -> None:
    el = page.element_of.get(bid)
    node = page.bids[bid]
    group = el.attr("name") if el is not None else ""
    if group:
        scope = el.ancestor("form") or _root_element(el)
        for peer in scope.walk():
            if (peer.tag == "input" and peer.attr("type").lower() == "radio"
                    and peer.attr("name") == group):
                peer_node = page.node_of.get(id(peer))
                if peer_node is not None:
                    peer_node.flags.discard("checked")
    node.flags.add("checked")
    page.refresh()


def _root_element(el: Element) -> Element:
    while el.parent is not None:
        el = el.parent
    return el


def choose_option(page: Page, select_node: SnapNode, labels: list) -> None:
    """Select option(s) by visible label; unknown labels raise KeyError."""
    by_name = {child.name: child for child in select_node.children
               if child.role == "option"}
    chosen = []
    for label in labels:
        if label not in by_name:
            raise KeyError(label)
        chosen.append(by_name[label])
    el = page.element_of.get(select_node.bid)
    multiple = el is not None and "multiple" in el.attrs
    if not multiple:
        chosen = chosen[-1:]
    for child in select_node.children:
        child.flags.discard("selected")
    for node in chosen:
        node.flags.add("selected")
    if chosen:
        select_node.props["value"] = chosen[-1].name
    page.refresh()
