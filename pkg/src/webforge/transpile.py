"""Format generators from the a11y IR plus the conversation-segment extractor.

Every generator preserves the bid multiset: each bid-carrying node shows
up exactly once in the output with its bid attached (data-bid in HTML,
bid= in XML, [bid] in Markdown, ref= comments in locator scripts).
docs/formats.md pins the exact layouts.
"""

import html as _html
import re
from enum import Enum

from .a11y import (
    INTERACTABLE_ROLES,
    A11yNode,
    A11yTree,
    ChangeSet,
    UnbalancedMarkers,
    diff_trees,
    serialize_a11y_text,
)
from .prompts import load_template, fill as fill_template


class TargetFormat(Enum):
    XML = "xml"
    HTML = "html"
    MARKDOWN = "md"
    LOCATOR_SCRIPT = "locator"
    NATURAL_LANGUAGE = "nl"


class UnsupportedFormat(ValueError):
    pass


# --- HTML ---------------------------------------------------------------------

_HTML_MAP = {
    "button": ("button", {}),
    "link": ("a", {"href": "#"}),
    "textbox": ("input", {"type": "text"}),
    "searchbox": ("input", {"type": "search"}),
    "checkbox": ("input", {"type": "checkbox"}),
    "radio": ("input", {"type": "radio"}),
    "combobox": ("select", {}),
    "option": ("option", {}),
    "heading": ("h2", {}),
    "list": ("ul", {}),
    "listitem": ("li", {}),
    "table": ("table", {}),
    "row": ("tr", {}),
    "cell": ("td", {}),
    "image": ("img", {}),
    "StaticText": ("span", {}),
}

_VOID_TAGS = {"input", "img"}


def _html_node(node: A11yNode, depth: int, out: list):
    tag, base_attrs = _HTML_MAP.get(node.role, ("div", {"role": node.role}))
    attrs = dict(base_attrs)
    if node.bid is not None:
        attrs["data-bid"] = node.bid
    for p in node.properties:
        attrs[f"data-{p.key.lower()}"] = "" if p.value is None else p.value
    if tag == "input" and node.name:
        attrs["aria-label"] = node.name
    rendered = "".join(
        f' {k}="{_html.escape(v, quote=True)}"' if v != "" else f" {k}"
        for k, v in attrs.items()
    )
    pad = "  " * depth
    if tag in _VOID_TAGS:
        out.append(f"{pad}<{tag}{rendered}>")
        for child in node.children:
            _html_node(child, depth + 1, out)
        return
    text = _html.escape(node.name, quote=False) if node.name and tag != "input" else ""
    if node.children:
        out.append(f"{pad}<{tag}{rendered}>{text}")
        for child in node.children:
            _html_node(child, depth + 1, out)
        out.append(f"{pad}</{tag}>")
    else:
        out.append(f"{pad}<{tag}{rendered}>{text}</{tag}>")


def _to_html(tree: A11yTree) -> str:
    out: list[str] = []
    for root in tree.roots:
        _html_node(root, 0, out)
    return "\n".join(out)


# --- XML ----------------------------------------------------------------------

_XML_TAG_BAD = re.compile(r"[^A-Za-z0-9_.-]")


def sanitize_xml_tag(role: str) -> str:
    tag = _XML_TAG_BAD.sub("_", role)
    if not tag or not (tag[0].isalpha() or tag[0] == "_"):
        tag = "_" + tag
    if tag.lower().startswith("xml"):
        tag = "_" + tag
    return tag


def _xml_escape_attr(value: str) -> str:
    return _html.escape(value, quote=True)


def _xml_node(node: A11yNode, depth: int, out: list):
    tag = sanitize_xml_tag(node.role)
    attrs = []
    if node.bid is not None:
        attrs.append(f' bid="{_xml_escape_attr(node.bid)}"')
    if node.name:
        attrs.append(f' name="{_xml_escape_attr(node.name)}"')
    seen_keys = set()
    for p in node.properties:
        key = sanitize_xml_tag(p.key.lower())
        while key in seen_keys:  # sanitizing may fold two distinct keys together
            key += "_"
        seen_keys.add(key)
        value = "true" if p.value is None else p.value
        attrs.append(f' p-{key}="{_xml_escape_attr(value)}"')
    pad = "  " * depth
    joined = "".join(attrs)
    if node.children:
        out.append(f"{pad}<{tag}{joined}>")
        for child in node.children:
            _xml_node(child, depth + 1, out)
        out.append(f"{pad}</{tag}>")
    else:
        out.append(f"{pad}<{tag}{joined}/>")


def _to_xml(tree: A11yTree) -> str:
    out = ["<a11y>"]
    for root in tree.roots:
        _xml_node(root, 1, out)
    out.append("</a11y>")
    return "\n".join(out)


# --- Markdown -------------------------------------------------------------------

def _md_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("[", "\\[").replace("]", "\\]")


def _md_node(node: A11yNode, depth: int, out: list):
    prefix = f"[{node.bid}] " if node.bid is not None else ""
    name = _md_escape(node.name)
    pad = "  " * depth
    emitted = True
    if node.role == "heading":
        out.append(f"## {prefix}{name}")
        emitted = False  # children of a heading stay at its indent level
    elif node.role == "link":
        out.append(f"{pad}- {prefix}[{name}](#)")
    elif node.role == "StaticText":
        if prefix:
            out.append(f"{pad}- {prefix}{name}")
        elif name:
            out.append(f"{pad}{name}")
            emitted = False
        else:
            emitted = False
    elif node.role == "listitem":
        out.append(f"{pad}- {prefix}{name}".rstrip())
    elif node.role in INTERACTABLE_ROLES or prefix:
        label = f"{node.role}: {name}" if name else node.role
        out.append(f"{pad}- {prefix}{label}")
    else:
        emitted = False
    for child in node.children:
        _md_node(child, depth + (1 if emitted else 0), out)


def _to_markdown(tree: A11yTree) -> str:
    out: list[str] = []
    for root in tree.roots:
        _md_node(root, 0, out)
    return "\n".join(out)


# --- Locator script ----------------------------------------------------------------

def _locator_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("'", "\\'")


def _to_locator(tree: A11yTree) -> str:
    out = []
    for node in tree.walk():
        if node.bid is None:
            continue
        if node.role in INTERACTABLE_ROLES:
            out.append(
                f"getByRole('{_locator_escape(node.role)}', "
                f"{{ name: '{_locator_escape(node.name)}' }}) /* ref={node.bid} */"
            )
        else:
            out.append(f"// {node.role}: {_locator_escape(node.name)} /* ref={node.bid} */")
    return "\n".join(out)


# --- entry points --------------------------------------------------------------------

def transpile(tree: A11yTree, fmt: TargetFormat) -> str:
    if fmt == TargetFormat.HTML:
        return _to_html(tree)
    if fmt == TargetFormat.XML:
        return _to_xml(tree)
    if fmt == TargetFormat.MARKDOWN:
        return _to_markdown(tree)
    if fmt == TargetFormat.LOCATOR_SCRIPT:
        return _to_locator(tree)
    raise UnsupportedFormat(f"transpile cannot target {fmt}; use describe_change")


OPEN_MARKER = "Initial Page State:"
CLOSE_MARKER = "First Action:"


def extract_tree_segments(conversation_text: str) -> list[tuple[str, tuple[int, int]]]:
    """Find maximal regions between the two markers; ranges are byte offsets."""
    raw = conversation_text.encode("utf-8")
    open_b = OPEN_MARKER.encode("utf-8")
    close_b = CLOSE_MARKER.encode("utf-8")
    segments = []
    pos = 0
    while True:
        start = raw.find(open_b, pos)
        if start < 0:
            break
        seg_start = start + len(open_b)
        end = raw.find(close_b, seg_start)
        if end < 0:
            raise UnbalancedMarkers(
                f"opening marker at byte {start} has no closing marker"
            )
        segments.append((raw[seg_start:end].decode("utf-8"), (seg_start, end)))
        pos = end + len(close_b)
    return segments


def substitute_segments(conversation_text: str, replacements: list[tuple[str, tuple[int, int]]]) -> str:
    """Splice replacement texts back in at the given byte ranges."""
    raw = conversation_text.encode("utf-8")
    out = []
    cursor = 0
    for text, (start, end) in sorted(replacements, key=lambda r: r[1][0]):
        out.append(raw[cursor:start])
        out.append(text.encode("utf-8"))
        cursor = end
    out.append(raw[cursor:])
    return b"".join(out).decode("utf-8")


DESCRIBE_BUDGET_BYTES = 32 * 1024


def describe_change(before: A11yTree, action, after: A11yTree, llm,
                    budget_bytes: int = DESCRIBE_BUDGET_BYTES) -> str:
    """Ask the gateway for a plain-language summary of a transition."""
    from .actions import render_action  # local import avoids a cycle

    before_text = serialize_a11y_text(before)
    after_text = serialize_a11y_text(after)
    action_text = render_action(action)
    if len(before_text.encode("utf-8")) + len(after_text.encode("utf-8")) <= budget_bytes:
        prompt = fill_template(
            load_template("describe_change"),
            before=before_text, action=action_text, after=after_text,
        )
    else:
        changeset = diff_trees(before, after)
        prompt = fill_template(
            load_template("describe_change_diff"),
            changeset=changeset.render(), action=action_text,
        )
    return llm.complete([{"role": "user", "content": prompt}])
