"""Action-string parsing: accepted shapes, defaults, and rejection reasons."""

import pytest

from forge_adapter.actions import GROUNDED, SIGNATURES, TERMINAL, parse_call
from forge_adapter.errors import BadActionError


def test_defaults_fill_in_for_omitted_parameters():
    assert parse_call("click('e3')") == (
        "click", {"bid": "e3", "button": "left", "mods": ()})
    assert parse_call("noop()") == ("noop", {"wait_ms": 1000})
    assert parse_call("infeasible()") == ("infeasible", {"reason": ""})


def test_keyword_and_positional_arguments_mix():
    name, params = parse_call("fill('e2', text='hi', auto=True)")
    assert name == "fill" and params == {"bid": "e2", "text": "hi", "auto": True}


def test_negative_numbers_and_tuples_parse():
    assert parse_call("scroll(0, -240)")[1] == {"dx": 0, "dy": -240}
    assert parse_call("click('e1', mods=('ctrl', 'shift'))")[1]["mods"] == (
        "ctrl", "shift")


def test_select_option_accepts_one_label_or_a_sequence():
    assert parse_call("select_option('e6', 'Price')")[1]["options"] == ("Price",)
    assert parse_call("select_option('e6', ['A', 'B'])")[1]["options"] == ("A", "B")


@pytest.mark.parametrize("text", [
    "click(",                      # unterminated
    "click('e1'); goto('x')",      # two statements
    "frobnicate('e1')",            # unknown primitive
    "click('e1', 'left', (), 4)",  # too many positionals
    "click('e1', lateral='x')",    # unknown keyword
    "click('e1', bid='e2')",       # duplicate parameter
    "fill('e1')",                  # missing required text
    "click(name)",                 # non-literal argument
    "click(3)",                    # bid must be a string
    "tab_focus(1.5)",              # index must be an integer
    "scroll('a', 'b')",            # deltas must be numeric
    "fill('e1', 7)",               # text must be a string
    "select_option('e1', [])",     # empty option list
    "",                            # nothing at all
])
def test_malformed_calls_are_rejected(text):
    with pytest.raises(BadActionError):
        parse_call(text)


def test_vocabulary_is_complete_and_categorized():
    assert len(SIGNATURES) == 20
    assert GROUNDED == {"click", "fill", "select_option", "hover"}
    assert TERMINAL == {"send_msg_to_user", "infeasible"}


def test_whitespace_around_the_call_is_fine():
    assert parse_call("  goto('http://x/')  ")[1] == {"url": "http://x/"}
