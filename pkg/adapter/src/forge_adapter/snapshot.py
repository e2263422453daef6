"""Write-side of the page snapshot text format: node trees out, canonical lines."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional

# values made of these characters render bare; anything else gets quoted
BARE_VALUE_RE = re.compile(r"[A-Za-z0-9_.,:/#%&?+@~()-]+")

# fixed render order so re-observing an untouched page is byte-identical
FLAG_ORDER = ("visible", "checked", "selected", "disabled")
PROP_ORDER = ("level", "url", "value")

ROLE_TOKEN_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*")


def quote(text: str) -> str:
    return "'" + text.replace("\\", "\\\\").replace("'", "\\'") + "'"


def prop_value(value: str) -> str:
    if value and BARE_VALUE_RE.fullmatch(value):
        return value
    return quote(value)


def safe_role(token: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9_]", "", token)
    if not cleaned or not ROLE_TOKEN_RE.fullmatch(cleaned):
        return "generic"
    return cleaned


@dataclass(eq=False)  # identity equality: trees may hold look-alike siblings
class SnapNode:
    """One rendered accessibility node; mutable so in-page edits can stick."""

    role: str
    name: str = ""
    bid: Optional[str] = None
    flags: set = field(default_factory=set)
    props: dict = field(default_factory=dict)
    children: list = field(default_factory=list)

    def line(self) -> str:
        parts = []
        if self.bid is not None:
            parts.append(f"[{self.bid}]")
        parts.append(self.role)
        if self.name:
            parts.append(quote(self.name))
        parts.extend(flag for flag in FLAG_ORDER if flag in self.flags)
        known = [key for key in PROP_ORDER if key in self.props]
        extra = sorted(key for key in self.props if key not in PROP_ORDER)
        for key in known + extra:
            parts.append(f"{key}={prop_value(str(self.props[key]))}")
        return " ".join(parts)

    def walk(self, depth: int = 0) -> Iterator[tuple[int, "SnapNode"]]:
        yield depth, self
        for child in self.children:
            yield from child.walk(depth + 1)


def render(root: SnapNode) -> str:
    return "\n".join("\t" * depth + node.line() for depth, node in root.walk())


def assign_bids(root: SnapNode) -> dict:
    """Number every node e1..eN in pre-order; the table is the grounding surface."""
    table = {}
    for i, (_, node) in enumerate(root.walk(), start=1):
        node.bid = f"e{i}"
        table[node.bid] = node
    return table
