"""The unified action DSL: 20 primitives parsed from single function calls.

Canonical strings look like ``fill('b534', 'Montre', True)``; the full
argument grammar is documented in docs/actions.md.  Parsing accepts any
Python-literal spelling (keyword args, true/false, int or float
coordinates); rendering emits exactly one canonical spelling, so
``parse -> render`` is a normalizer and ``render -> parse`` an identity.
"""

import ast
import math
import random
from dataclasses import dataclass, field
from enum import Enum

from .a11y import INTERACTABLE_ROLES, A11yTree
from .resources import load_action_weights, load_lexicon


class ActionError(Exception):
    pass


class ActionSyntaxError(ActionError):
    pass


class UnknownPrimitive(ActionError):
    pass


class ArityError(ActionError):
    pass


class ActionTypeError(ActionError):
    pass


class MultipleActions(ActionError):
    pass


class GroundingError(ActionError):
    def __init__(self, missing_bid: str):
        super().__init__(f"no element with bid {missing_bid!r} on this page")
        self.missing_bid = missing_bid


class VisibilityError(ActionError):
    def __init__(self, bid: str):
        super().__init__(f"element {bid!r} is not visible")
        self.bid = bid


class NoExecutableAction(ActionError):
    pass


class Category(Enum):
    ELEMENT = "ELEMENT"
    COORDINATE_MOUSE = "COORDINATE_MOUSE"
    KEYBOARD = "KEYBOARD"
    BROWSER_NAV = "BROWSER_NAV"
    META = "META"


MOUSE_BUTTONS = ("left", "middle", "right", "double")
MODIFIER_KEYS = ("Shift", "Ctrl", "Alt", "Meta")

# arg kinds: bid, str, num, int, bool, str_list, mods
@dataclass(frozen=True)
class _Spec:
    category: Category
    params: tuple  # of (name, kind, default) — default is _REQUIRED if mandatory
    bid_params: tuple = ()


_REQUIRED = object()

SPECS: dict[str, _Spec] = {
    "click": _Spec(
        Category.ELEMENT,
        (("bid", "bid", _REQUIRED), ("button", "str", "left"), ("mods", "mods", ())),
        bid_params=("bid",),
    ),
    "fill": _Spec(
        Category.ELEMENT,
        (("bid", "bid", _REQUIRED), ("text", "str", _REQUIRED), ("auto", "bool", False)),
        bid_params=("bid",),
    ),
    "select_option": _Spec(
        Category.ELEMENT,
        (("bid", "bid", _REQUIRED), ("options", "str_list", _REQUIRED)),
        bid_params=("bid",),
    ),
    "hover": _Spec(Category.ELEMENT, (("bid", "bid", _REQUIRED),), bid_params=("bid",)),
    "mouse_move": _Spec(
        Category.COORDINATE_MOUSE, (("x", "num", _REQUIRED), ("y", "num", _REQUIRED))
    ),
    "mouse_click": _Spec(
        Category.COORDINATE_MOUSE,
        (("x", "num", _REQUIRED), ("y", "num", _REQUIRED), ("button", "str", "left")),
    ),
    "mouse_down": _Spec(
        Category.COORDINATE_MOUSE, (("x", "num", _REQUIRED), ("y", "num", _REQUIRED))
    ),
    "mouse_up": _Spec(
        Category.COORDINATE_MOUSE, (("x", "num", _REQUIRED), ("y", "num", _REQUIRED))
    ),
    "keyboard_press": _Spec(Category.KEYBOARD, (("key", "str", _REQUIRED),)),
    "keyboard_type": _Spec(Category.KEYBOARD, (("text", "str", _REQUIRED),)),
    "scroll": _Spec(
        Category.BROWSER_NAV, (("dx", "num", _REQUIRED), ("dy", "num", _REQUIRED))
    ),
    "goto": _Spec(Category.BROWSER_NAV, (("url", "str", _REQUIRED),)),
    "go_back": _Spec(Category.BROWSER_NAV, ()),
    "go_fwd": _Spec(Category.BROWSER_NAV, ()),
    "tab_new": _Spec(Category.BROWSER_NAV, ()),
    "tab_close": _Spec(Category.BROWSER_NAV, ()),
    "tab_focus": _Spec(Category.BROWSER_NAV, (("index", "int", _REQUIRED),)),
    "send_msg_to_user": _Spec(Category.META, (("text", "str", _REQUIRED),)),
    "noop": _Spec(Category.META, (("wait_ms", "num", 1000),)),
    "infeasible": _Spec(Category.META, (("reason", "str", ""),)),
}

PRIMITIVES = tuple(SPECS)
assert len(PRIMITIVES) == 20

CATEGORY_OF = {name: spec.category for name, spec in SPECS.items()}


@dataclass(frozen=True)
class Action:
    primitive: str
    args: tuple = ()  # values in canonical param order, defaults included

    def __post_init__(self):
        if self.primitive not in SPECS:
            raise UnknownPrimitive(self.primitive)
        spec = SPECS[self.primitive]
        if len(self.args) != len(spec.params):
            raise ArityError(
                f"{self.primitive} expects {len(spec.params)} args, got {len(self.args)}"
            )
        for (name, kind, _), value in zip(spec.params, self.args):
            _check_arg(self.primitive, name, kind, value)

    @property
    def category(self) -> Category:
        return CATEGORY_OF[self.primitive]

    def arg(self, name: str):
        spec = SPECS[self.primitive]
        for (pname, _, _), value in zip(spec.params, self.args):
            if pname == name:
                return value
        raise KeyError(name)

    def bids(self) -> tuple[str, ...]:
        spec = SPECS[self.primitive]
        return tuple(self.arg(p) for p in spec.bid_params)

    def is_terminal(self) -> bool:
        return self.primitive in ("send_msg_to_user", "infeasible")


def _check_arg(primitive, name, kind, value):
    label = f"{primitive}(... {name}=)"
    if kind == "bid":
        if not isinstance(value, str) or not value:
            raise ActionTypeError(f"{label} needs a nonempty string bid")
    elif kind == "str":
        if not isinstance(value, str):
            raise ActionTypeError(f"{label} needs a string")
    elif kind == "num":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ActionTypeError(f"{label} needs a number")
        if not math.isfinite(value):
            raise ActionTypeError(f"{label} must be finite")
    elif kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ActionTypeError(f"{label} needs an integer")
    elif kind == "bool":
        if not isinstance(value, bool):
            raise ActionTypeError(f"{label} needs a boolean")
    elif kind == "str_list":
        if not isinstance(value, tuple) or not value or not all(
            isinstance(v, str) for v in value
        ):
            raise ActionTypeError(f"{label} needs a nonempty list of strings")
    elif kind == "mods":
        if not isinstance(value, tuple) or not all(v in MODIFIER_KEYS for v in value):
            raise ActionTypeError(f"{label} entries must be one of {MODIFIER_KEYS}")
    else:  # pragma: no cover - spec table typo guard
        raise AssertionError(kind)
    if primitive == "click" and name == "button" and value not in MOUSE_BUTTONS:
        raise ActionTypeError(f"click button must be one of {MOUSE_BUTTONS}")
    if primitive == "mouse_click" and name == "button" and value not in MOUSE_BUTTONS:
        raise ActionTypeError(f"mouse_click button must be one of {MOUSE_BUTTONS}")


def make_action(primitive: str, **kwargs) -> Action:
    """Build an action by name, filling omitted args with their defaults."""
    if primitive not in SPECS:
        raise UnknownPrimitive(primitive)
    spec = SPECS[primitive]
    values = []
    for name, kind, default in spec.params:
        if name in kwargs:
            value = kwargs.pop(name)
            value = _coerce(kind, value)
        elif default is _REQUIRED:
            raise ArityError(f"{primitive} missing required argument {name!r}")
        else:
            value = default
        values.append(value)
    if kwargs:
        raise ArityError(f"{primitive} got unexpected arguments {sorted(kwargs)}")
    return Action(primitive, tuple(values))


def _coerce(kind, value):
    if kind == "str_list":
        if isinstance(value, str):
            return (value,)
        if isinstance(value, (list, tuple)):
            return tuple(value)
    if kind == "mods" and isinstance(value, (list, tuple)):
        return tuple(value)
    return value


# --- parsing -----------------------------------------------------------------

def parse_action(text: str) -> Action:
    """Parse one canonical action call; rejects anything but a single call."""
    try:
        module = ast.parse(text.strip(), mode="exec")
    except SyntaxError as exc:
        raise ActionSyntaxError(f"not a function call: {exc.msg}") from exc
    if not module.body:
        raise ActionSyntaxError("empty action string")
    if len(module.body) > 1:
        raise MultipleActions(f"{len(module.body)} statements, expected 1")
    stmt = module.body[0]
    if not isinstance(stmt, ast.Expr) or not isinstance(stmt.value, ast.Call):
        raise ActionSyntaxError("expected a single function call")
    call = stmt.value
    if not isinstance(call.func, ast.Name):
        raise ActionSyntaxError("action name must be a bare identifier")
    name = call.func.id
    if name not in SPECS:
        raise UnknownPrimitive(name)
    spec = SPECS[name]
    if len(call.args) > len(spec.params):
        raise ArityError(
            f"{name} takes at most {len(spec.params)} arguments, got {len(call.args)}"
        )
    kwargs = {}
    for pos, node in enumerate(call.args):
        kwargs[spec.params[pos][0]] = _literal(node)
    for kw in call.keywords:
        if kw.arg is None:
            raise ActionSyntaxError("**kwargs is not allowed")
        if kw.arg not in [p[0] for p in spec.params]:
            raise ArityError(f"{name} has no argument {kw.arg!r}")
        if kw.arg in kwargs:
            raise ArityError(f"duplicate argument {kw.arg!r}")
        kwargs[kw.arg] = _literal(kw.value)
    return make_action(name, **kwargs)


def _literal(node):
    if isinstance(node, ast.Constant):
        return node.value
    if isinstance(node, ast.Name) and node.id in ("true", "false"):
        return node.id == "true"
    if isinstance(node, ast.List):
        return [_literal(e) for e in node.elts]
    if isinstance(node, ast.Tuple):
        return tuple(_literal(e) for e in node.elts)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        inner = _literal(node.operand)
        if isinstance(inner, (int, float)) and not isinstance(inner, bool):
            return -inner
    raise ActionSyntaxError(f"unsupported literal at col {node.col_offset}")


# --- rendering -----------------------------------------------------------------

def _render_value(value) -> str:
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, str):
        return "'" + value.replace("\\", "\\\\").replace("'", "\\'") + "'"
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() else repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, tuple):
        return "[" + ", ".join(_render_value(v) for v in value) + "]"
    raise ActionTypeError(f"unrenderable value {value!r}")


def render_action(action: Action) -> str:
    """Canonical spelling: positional args, longest default suffix omitted."""
    spec = SPECS[action.primitive]
    values = list(action.args)
    while values:
        default = spec.params[len(values) - 1][2]
        if default is _REQUIRED or values[-1] != default:
            break
        values.pop()
    args = ", ".join(_render_value(v) for v in values)
    return f"{action.primitive}({args})"


# --- validation ----------------------------------------------------------------

def validate_against_state(action: Action, tree: A11yTree) -> None:
    """Raise GroundingError / VisibilityError when the action cannot ground."""
    bids = tree.bids()
    visibility_tracked = any(n.has_flag("visible") for n in bids.values())
    for bid in action.bids():
        node = bids.get(bid)
        if node is None:
            raise GroundingError(bid)
        if visibility_tracked and not node.has_flag("visible"):
            raise VisibilityError(bid)


# --- sampling -------------------------------------------------------------------

FILL_ROLES = ("textbox", "searchbox")
SELECT_ROLES = ("combobox",)

KEY_CHOICES = (
    "Enter", "Tab", "Escape", "Backspace", "ArrowDown", "ArrowUp", "PageDown", "a",
)
SCROLL_STEPS = (-480, -240, -120, 120, 240, 480)


@dataclass
class Sampler:
    """Deterministic action sampler; weights default to the shipped table."""

    weights: dict[str, float] = field(default_factory=load_action_weights)
    lexicon: tuple[str, ...] = ()

    def __post_init__(self):
        unknown = set(self.weights) - set(SPECS)
        if unknown:
            raise UnknownPrimitive(f"weight table names unknown primitives: {sorted(unknown)}")
        if not self.lexicon:
            self.lexicon = tuple(load_lexicon())

    def sample(self, tree: A11yTree, rng_seed: int) -> Action:
        rng = random.Random(rng_seed)
        targets = _eligible_targets(tree)
        eligible: list[tuple[str, float]] = []
        for name, weight in self.weights.items():
            if weight <= 0:
                continue
            if name in ("click", "hover") and not targets["any"]:
                continue
            if name == "fill" and not targets["fill"]:
                continue
            if name == "select_option" and not targets["select"]:
                continue
            eligible.append((name, weight))
        if not eligible:
            raise NoExecutableAction("no executable primitive carries weight on this page")
        total = sum(w for _, w in eligible)
        pick = rng.random() * total
        acc = 0.0
        name = eligible[-1][0]
        for cand, weight in eligible:
            acc += weight
            if pick <= acc:
                name = cand
                break
        return self._build(name, targets, rng)

    def _build(self, name: str, targets, rng: random.Random) -> Action:
        word = lambda: rng.choice(self.lexicon)
        if name == "click":
            return make_action("click", bid=rng.choice(targets["any"]).bid)
        if name == "hover":
            return make_action("hover", bid=rng.choice(targets["any"]).bid)
        if name == "fill":
            return make_action("fill", bid=rng.choice(targets["fill"]).bid, text=word())
        if name == "select_option":
            node = rng.choice(targets["select"])
            options = [c.name for c in node.children if c.role == "option" and c.name]
            choice = rng.choice(options) if options else word()
            return make_action("select_option", bid=node.bid, options=[choice])
        if name in ("mouse_move", "mouse_click", "mouse_down", "mouse_up"):
            x, y = rng.randrange(0, 1280), rng.randrange(0, 720)
            return make_action(name, x=x, y=y)
        if name == "keyboard_press":
            return make_action("keyboard_press", key=rng.choice(KEY_CHOICES))
        if name == "keyboard_type":
            return make_action("keyboard_type", text=word())
        if name == "scroll":
            return make_action("scroll", dx=0, dy=rng.choice(SCROLL_STEPS))
        if name == "goto":
            return make_action("goto", url=f"https://example.com/{word()}")
        if name == "tab_focus":
            return make_action("tab_focus", index=rng.randrange(0, 4))
        if name == "send_msg_to_user":
            return make_action("send_msg_to_user", text=f"Found {word()}.")
        return make_action(name)


def _eligible_targets(tree: A11yTree) -> dict[str, list]:
    visibility_tracked = any(
        n.has_flag("visible") for n in tree.walk() if n.bid is not None
    )

    def usable(node):
        if node.bid is None:
            return False
        return node.has_flag("visible") if visibility_tracked else True

    nodes = [n for n in tree.walk() if usable(n)]
    return {
        "any": [n for n in nodes if n.role in INTERACTABLE_ROLES],
        "fill": [n for n in nodes if n.role in FILL_ROLES],
        "select": [n for n in nodes if n.role in SELECT_ROLES],
    }


def sample_action(
    tree: A11yTree,
    weights: dict[str, float] | None = None,
    rng_seed: int = 0,
    lexicon: tuple[str, ...] = (),
) -> Action:
    """Draw one executable action; deterministic in (tree, weights, seed)."""
    sampler = Sampler(weights=dict(weights) if weights else load_action_weights(),
                      lexicon=lexicon)
    action = sampler.sample(tree, rng_seed)
    validate_against_state(action, tree)
    return action


def action_space_lines() -> str:
    """One-line usage summary per primitive, for the agent prompt's slot."""
    lines = []
    for name, spec in SPECS.items():
        params = []
        for pname, _, default in spec.params:
            params.append(pname if default is _REQUIRED else f"{pname}?")
        lines.append(f"{name}({', '.join(params)})")
    return "\n".join(lines)
