"""Parser for single-call action strings ("click('e3')") into (name, params)."""

from __future__ import annotations

import ast

from .errors import BadActionError

_REQUIRED = object()

# (param, kind, default) triples per primitive; _REQUIRED marks mandatory ones
SIGNATURES = {
    "click": (("bid", "str", _REQUIRED), ("button", "str", "left"),
              ("mods", "str_tuple", ())),
    "fill": (("bid", "str", _REQUIRED), ("text", "str", _REQUIRED),
             ("auto", "bool", False)),
    "select_option": (("bid", "str", _REQUIRED), ("options", "str_many", _REQUIRED)),
    "hover": (("bid", "str", _REQUIRED),),
    "mouse_move": (("x", "num", _REQUIRED), ("y", "num", _REQUIRED)),
    "mouse_click": (("x", "num", _REQUIRED), ("y", "num", _REQUIRED),
                    ("button", "str", "left")),
    "mouse_down": (("x", "num", _REQUIRED), ("y", "num", _REQUIRED)),
    "mouse_up": (("x", "num", _REQUIRED), ("y", "num", _REQUIRED)),
    "keyboard_press": (("key", "str", _REQUIRED),),
    "keyboard_type": (("text", "str", _REQUIRED),),
    "scroll": (("dx", "num", _REQUIRED), ("dy", "num", _REQUIRED)),
    "goto": (("url", "str", _REQUIRED),),
    "go_back": (),
    "go_fwd": (),
    "tab_new": (),
    "tab_close": (),
    "tab_focus": (("index", "int", _REQUIRED),),
    "send_msg_to_user": (("text", "str", _REQUIRED),),
    "noop": (("wait_ms", "num", 1000),),
    "infeasible": (("reason", "str", ""),),
}

GROUNDED = frozenset({"click", "fill", "select_option", "hover"})
TERMINAL = frozenset({"send_msg_to_user", "infeasible"})


def _literal(node: ast.expr, text: str):
    if isinstance(node, ast.Constant):
        return node.value
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        inner = _literal(node.operand, text)
        if isinstance(inner, (int, float)) and not isinstance(inner, bool):
            return -inner
    elif isinstance(node, (ast.Tuple, ast.List)):
        return tuple(_literal(item, text) for item in node.elts)
    raise BadActionError(f"non-literal argument in {text!r}")


def _check_kind(name: str, param: str, kind: str, value):
    if kind == "str":
        ok = isinstance(value, str)
    elif kind == "bool":
        ok = isinstance(value, bool)
    elif kind == "int":
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind == "num":
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif kind == "str_tuple":
        ok = (isinstance(value, tuple)
              and all(isinstance(item, str) for item in value))
    else:  # str_many: one label or a sequence of labels
        if isinstance(value, str):
            value = (value,)
        ok = (isinstance(value, tuple) and len(value) > 0
              and all(isinstance(item, str) for item in value))
    if not ok:
        raise BadActionError(f"{name}: argument {param!r} has the wrong type")
    return value


def parse_call(text: str) -> tuple[str, dict]:
    """One primitive call with literal arguments, or BadActionError."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except (SyntaxError, ValueError):
        raise BadActionError(f"not a call expression: {text!r}")
    call = tree.body
    if not isinstance(call, ast.Call) or not isinstance(call.func, ast.Name):
        raise BadActionError(f"not a call expression: {text!r}")
    name = call.func.id
    signature = SIGNATURES.get(name)
    if signature is None:
        raise BadActionError(f"unknown primitive {name!r}")
    if len(call.args) > len(signature):
        raise BadActionError(f"{name} takes at most {len(signature)} arguments")

    params = {}
    for (param, _, _), node in zip(signature, call.args):
        params[param] = _literal(node, text)
    names = {param for param, _, _ in signature}
    for keyword in call.keywords:
        if keyword.arg not in names:
            raise BadActionError(f"{name} has no parameter {keyword.arg!r}")
        if keyword.arg in params:
            raise BadActionError(f"duplicate argument {keyword.arg!r}")
        params[keyword.arg] = _literal(keyword.value, text)
    for param, kind, default in signature:
        if param in params:
            params[param] = _check_kind(name, param, kind, params[param])
        elif default is _REQUIRED:
            raise BadActionError(f"{name} missing required argument {param!r}")
        else:
            params[param] = default
    return name, params
