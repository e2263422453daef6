"""Canonical accessibility-tree IR: textual parser, serializer, diff, counts.

The text grammar is one node per line, depth encoded as leading tabs
(two-space indentation is accepted on input and normalized to tabs):

    [bid] role 'name' flag key=value key='quoted value'

The bid segment and the quoted name are both optional.  The full grammar
is documented in docs/formats.md and is bit-exact: ``serialize_a11y_text``
followed by ``parse_a11y_text`` is the identity on any valid tree, and
the reverse composition is the identity on canonical text.
"""

import re
from dataclasses import dataclass, field

BID_RE = re.compile(r"[A-Za-z0-9_-]+")
PROP_KEY_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_:-]*")
BARE_VALUE_RE = re.compile(r"[A-Za-z0-9_.,:/#%&?+@~()-]+")

# Roles an agent can act on directly; feeds sampling and URL scoring.
INTERACTABLE_ROLES = (
    "button",
    "link",
    "textbox",
    "combobox",
    "checkbox",
    "radio",
    "tab",
    "menuitem",
    "searchbox",
    "slider",
    "switch",
)


class A11yError(Exception):
    """Base class for grammar violations; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MalformedLine(A11yError):
    pass


class IndentJump(A11yError):
    pass


class DuplicateBid(A11yError):
    pass


class UnbalancedMarkers(Exception):
    """An opening segment marker with no closing marker (see transpile)."""


@dataclass(frozen=True, slots=True)
class NodeProperty:
    key: str
    value: str | None = None  # None marks a boolean flag such as "visible"

    def __post_init__(self):
        if not self.key or not PROP_KEY_RE.fullmatch(self.key):
            raise ValueError(f"bad property key: {self.key!r}")
        if self.value is not None and ("\n" in self.value or "\r" in self.value):
            raise ValueError(f"newline in property value of {self.key!r}")


@dataclass(frozen=True, slots=True)
class A11yNode:
    role: str
    name: str = ""
    bid: str | None = None
    properties: tuple[NodeProperty, ...] = ()
    children: tuple["A11yNode", ...] = ()

    def __post_init__(self):
        if not self.role or any(ch.isspace() for ch in self.role):
            raise ValueError(f"bad role: {self.role!r}")
        if "\n" in self.name or "\r" in self.name:
            raise ValueError("newline in node name")
        if self.bid is not None and not BID_RE.fullmatch(self.bid):
            raise ValueError(f"bad bid: {self.bid!r}")
        keys = [p.key for p in self.properties]
        if len(keys) != len(set(keys)):
            raise ValueError(f"duplicate property keys on node {self.bid or self.role}")

    def has_flag(self, key: str) -> bool:
        return any(p.key == key and p.value is None for p in self.properties)

    def prop(self, key: str) -> str | None:
        for p in self.properties:
            if p.key == key:
                return p.value
        return None


@dataclass(frozen=True, slots=True)
class A11yTree:
    roots: tuple[A11yNode, ...] = ()
    source_url: str | None = None

    def __post_init__(self):
        seen: set[str] = set()
        for node in self.walk():
            if node.bid is None:
                continue
            if node.bid in seen:
                raise ValueError(f"duplicate bid in tree: {node.bid!r}")
            seen.add(node.bid)

    def walk(self):
        """Yield every node in document (pre-) order."""
        stack = list(reversed(self.roots))
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def walk_depth(self):
        """Yield (depth, node) pairs in document order."""
        stack = [(0, r) for r in reversed(self.roots)]
        while stack:
            depth, node = stack.pop()
            yield depth, node
            stack.extend((depth + 1, c) for c in reversed(node.children))

    def bids(self) -> dict[str, A11yNode]:
        return {n.bid: n for n in self.walk() if n.bid is not None}

    def find(self, bid: str) -> A11yNode | None:
        return self.bids().get(bid)


@dataclass(frozen=True, slots=True)
class ChangeSet:
    """Bid-keyed tree delta plus a flag for changes invisible to bids.

    ``structural_changed`` covers edits to bid-less nodes and moves of
    surviving bid nodes; insertions and removals of bid-carrying nodes
    live in ``added``/``removed`` instead.
    """

    added: tuple[str, ...] = ()
    removed: tuple[str, ...] = ()
    modified: tuple[str, ...] = ()
    structural_changed: bool = False

    def is_empty(self) -> bool:
        return not (self.added or self.removed or self.modified or self.structural_changed)

    def size(self) -> int:
        return len(self.added) + len(self.removed) + len(self.modified)

    def render(self) -> str:
        if self.is_empty():
            return "no change"
        parts = []
        if self.added:
            parts.append("added: " + ", ".join(self.added))
        if self.removed:
            parts.append("removed: " + ", ".join(self.removed))
        if self.modified:
            parts.append("modified: " + ", ".join(self.modified))
        if self.structural_changed:
            parts.append("structure changed")
        return "; ".join(parts)


def _scan_quoted(line: str, pos: int, lineno: int) -> tuple[str, int]:
    """Scan a single-quoted string starting at line[pos] == "'"."""
    out = []
    i = pos + 1
    while i < len(line):
        ch = line[i]
        if ch == "\\":
            if i + 1 >= len(line) or line[i + 1] not in ("'", "\\"):
                raise MalformedLine("bad escape in quoted string", lineno)
            out.append(line[i + 1])
            i += 2
        elif ch == "'":
            return "".join(out), i + 1
        else:
            out.append(ch)
            i += 1
    raise MalformedLine("unterminated quoted string", lineno)


def _quote(text: str) -> str:
    return "'" + text.replace("\\", "\\\\").replace("'", "\\'") + "'"


def _parse_indent(line: str, lineno: int) -> tuple[int, str]:
    i = 0
    while i < len(line) and line[i] in (" ", "\t"):
        i += 1
    ws, rest = line[:i], line[i:]
    if not rest:
        raise MalformedLine("blank line", lineno)
    if "\t" in ws and " " in ws:
        raise MalformedLine("mixed tab/space indentation", lineno)
    if " " in ws:
        if len(ws) % 2 != 0:
            raise MalformedLine("odd space indentation (expected 2 per level)", lineno)
        return len(ws) // 2, rest
    return len(ws), rest


def _parse_line(rest: str, lineno: int) -> A11yNode:
    bid = None
    i = 0
    if rest.startswith("["):
        end = rest.find("]")
        if end < 0:
            raise MalformedLine("unterminated bid segment", lineno)
        bid = rest[1:end]
        if not BID_RE.fullmatch(bid):
            raise MalformedLine(f"bad bid {bid!r}", lineno)
        i = end + 1
        if i >= len(rest) or rest[i] != " ":
            raise MalformedLine("no role token", lineno)
        i += 1
    j = i
    while j < len(rest) and rest[j] != " ":
        j += 1
    role = rest[i:j]
    if not role or role.startswith("'"):
        raise MalformedLine("no role token", lineno)
    i = j
    name = ""
    if i < len(rest) and rest[i : i + 2] == " '":
        name, i = _scan_quoted(rest, i + 1, lineno)
    props: list[NodeProperty] = []
    seen_keys: set[str] = set()
    while i < len(rest):
        if rest[i] != " ":
            raise MalformedLine(f"unexpected character {rest[i]!r}", lineno)
        i += 1
        j = i
        while j < len(rest) and rest[j] not in (" ", "="):
            j += 1
        key = rest[i:j]
        if not key or not PROP_KEY_RE.fullmatch(key):
            raise MalformedLine(f"bad property key {key!r}", lineno)
        if key in seen_keys:
            raise MalformedLine(f"duplicate property key {key!r}", lineno)
        seen_keys.add(key)
        value = None
        i = j
        if i < len(rest) and rest[i] == "=":
            i += 1
            if i < len(rest) and rest[i] == "'":
                value, i = _scan_quoted(rest, i, lineno)
            else:
                j = i
                while j < len(rest) and rest[j] != " ":
                    j += 1
                value = rest[i:j]
                if not value:
                    raise MalformedLine(f"empty value for {key!r}", lineno)
                i = j
        props.append(NodeProperty(key, value))
    try:
        return A11yNode(role=role, name=name, bid=bid, properties=tuple(props))
    except ValueError as exc:
        raise MalformedLine(str(exc), lineno) from exc


@dataclass
class _Partial:
    node: A11yNode
    children: list = field(default_factory=list)


def parse_a11y_text(text: str, source_url: str | None = None) -> A11yTree:
    """Parse canonical A11y text into a tree (stack-based, single pass)."""
    if text.endswith("\n"):
        text = text[:-1]
    if not text:
        return A11yTree(roots=(), source_url=source_url)
    roots: list[_Partial] = []
    stack: list[_Partial] = []  # stack[d] = open node at depth d
    seen_bids: dict[str, int] = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        depth, rest = _parse_indent(line, lineno)
        if depth > len(stack):
            raise IndentJump(f"depth {depth} after depth {len(stack) - 1}", lineno)
        node = _parse_line(rest, lineno)
        if node.bid is not None:
            if node.bid in seen_bids:
                raise DuplicateBid(
                    f"bid {node.bid!r} already used at line {seen_bids[node.bid]}", lineno
                )
            seen_bids[node.bid] = lineno
        partial = _Partial(node)
        del stack[depth:]
        if depth == 0:
            roots.append(partial)
        else:
            stack[depth - 1].children.append(partial)
        stack.append(partial)

    def build(p: _Partial) -> A11yNode:
        if not p.children:
            return p.node
        return A11yNode(
            role=p.node.role,
            name=p.node.name,
            bid=p.node.bid,
            properties=p.node.properties,
            children=tuple(build(c) for c in p.children),
        )

    return A11yTree(roots=tuple(build(r) for r in roots), source_url=source_url)


def render_node_line(node: A11yNode) -> str:
    parts = []
    if node.bid is not None:
        parts.append(f"[{node.bid}]")
    parts.append(node.role)
    if node.name:
        parts.append(_quote(node.name))
    for p in node.properties:
        if p.value is None:
            parts.append(p.key)
        elif BARE_VALUE_RE.fullmatch(p.value):
            parts.append(f"{p.key}={p.value}")
        else:
            parts.append(f"{p.key}={_quote(p.value)}")
    return " ".join(parts)


def serialize_a11y_text(tree: A11yTree) -> str:
    """Render a tree to canonical text: tabs for depth, one node per line."""
    lines = ["\t" * depth + render_node_line(node) for depth, node in tree.walk_depth()]
    return "\n".join(lines)


def _bid_map(tree: A11yTree) -> dict[str, tuple]:
    return {
        n.bid: (n.role, n.name, n.properties)
        for n in tree.walk()
        if n.bid is not None
    }


def diff_trees(before: A11yTree, after: A11yTree) -> ChangeSet:
    old, new = _bid_map(before), _bid_map(after)
    added = tuple(sorted(set(new) - set(old)))
    removed = tuple(sorted(set(old) - set(new)))
    modified = tuple(sorted(b for b in set(old) & set(new) if old[b] != new[b]))
    changed = set(added) | set(removed) | set(modified)

    def skeleton(tree: A11yTree) -> list[tuple]:
        out = []
        for depth, node in tree.walk_depth():
            if node.bid is not None:
                if node.bid not in changed:
                    out.append((depth, node.bid))
            else:
                out.append((depth, node.role, node.name, node.properties))
        return out

    structural = skeleton(before) != skeleton(after)
    return ChangeSet(added=added, removed=removed, modified=modified, structural_changed=structural)


def count_interactables(tree: A11yTree) -> dict[str, int]:
    counts = {role: 0 for role in INTERACTABLE_ROLES}
    for node in tree.walk():
        if node.role in counts:
            counts[node.role] += 1
    return counts
