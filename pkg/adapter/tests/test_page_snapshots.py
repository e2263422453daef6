"""Snapshot emitter and HTML-to-node building, without any network."""

import pytest

from forge_adapter.htmlpage import build_page, form_target
from forge_adapter.snapshot import (SnapNode, assign_bids, prop_value, quote,
                                    render, safe_role)

BASE = "http://shop.test/index.html"


def _page(body: str, url: str = BASE, title: str = "T"):
    return build_page(f"<html><head><title>{title}</title></head>"
                      f"<body>{body}</body></html>", url)


# --- emitter rules ---


def test_quote_escapes_backslash_then_apostrophe():
    assert quote(r"it's a c:\path") == r"'it\'s a c:\\path'"


@pytest.mark.parametrize("value,expect", [
    ("plain_word-9.c", "plain_word-9.c"),
    ("http://h/p?a=1", "'http://h/p?a=1'"),  # '=' is not a bare character
    ("two words", "'two words'"),
    ("", "''"),
])
def test_prop_values_go_bare_only_when_safe(value, expect):
    assert prop_value(value) == expect


def test_safe_role_strips_to_a_plain_token():
    assert safe_role("push button") == "pushbutton"
    assert safe_role("menuitem") == "menuitem"
    assert safe_role("") == "generic"
    assert safe_role("123") == "generic"


def test_render_uses_tabs_and_fixed_ordering():
    root = SnapNode("RootWebArea", name="Top", props={"url": "http://x/"})
    child = SnapNode("checkbox", name="On", flags={"checked", "visible"},
                     props={"value": "v"})
    root.children.append(child)
    assign_bids(root)
    assert render(root) == (
        "[e1] RootWebArea 'Top' url=http://x/\n"
        "\t[e2] checkbox 'On' visible checked value=v")


def test_assign_bids_numbers_preorder_and_maps_back():
    root = SnapNode("RootWebArea")
    a, b = SnapNode("list"), SnapNode("paragraph")
    a.children = [SnapNode("listitem"), SnapNode("listitem")]
    root.children = [a, b]
    table = assign_bids(root)
    order = [node.bid for _, node in root.walk()]
    assert order == ["e1", "e2", "e3", "e4", "e5"]
    assert all(table[bid] is node for _, node in root.walk() for bid in [node.bid])


# --- element tree parsing ---


def _first_text(node):
    for _, sub in node.walk():
        if sub.role == "StaticText":
            return sub.name
    return ""


def test_unclosed_siblings_and_stray_ends_are_tolerated():
    page = build_page("<ul><li>one<li>two</ul></div><p>after", BASE)
    items = [node for _, node in page.root.walk() if node.role == "listitem"]
    assert [_first_text(item) for item in items] == ["one", "two"]
    paragraphs = [node for _, node in page.root.walk() if node.role == "paragraph"]
    assert len(paragraphs) == 1


def test_inline_markup_dissolves_into_text_runs():
    page = _page("<p>zero <em>java</em>script</p>")
    texts = [n.name for _, n in page.root.walk() if n.role == "StaticText"]
    assert texts == ["zero", "javascript"] or texts == ["zero", "java", "script"]


def test_title_names_the_root_and_missing_title_falls_back_to_url():
    assert _page("<p>x</p>", title="Named").root.name == "Named"
    bare = build_page("<body><p>x</p></body>", "http://h/only")
    assert bare.root.name == "http://h/only"


# --- role mapping and naming ---


def test_links_resolve_relative_hrefs_against_the_page_url():
    page = _page('<a href="a/b.html">Go</a>')
    link = next(n for _, n in page.root.walk() if n.role == "link")
    assert link.props["url"] == "http://shop.test/a/b.html"
    assert link.name == "Go"
    assert "visible" in link.flags


def test_control_names_prefer_aria_label_then_label_then_placeholder():
    body = ('<label for="a">From label</label>'
            '<input id="a" type="text" aria-label="From aria">'
            '<input id="b" type="text" placeholder="From placeholder">'
            '<label for="c">Labelled</label><input id="c" type="text">')
    page = _page(body)
    names = [n.name for _, n in page.root.walk() if n.role == "textbox"]
    assert names == ["From aria", "From placeholder", "Labelled"]


def test_select_renders_options_and_initial_value():
    page = _page('<select name="n"><option>A</option>'
                 '<option selected>B</option></select>')
    combo = next(n for _, n in page.root.walk() if n.role == "combobox")
    assert combo.props["value"] == "B"
    flags = [("selected" in o.flags) for o in combo.children]
    assert flags == [False, True]


def test_hidden_content_is_left_out():
    page = _page('<p hidden>gone</p><p aria-hidden="true">gone</p>'
                 '<input type="hidden" name="h" value="1"><p>kept</p>')
    texts = [n.name for _, n in page.root.walk() if n.role == "StaticText"]
    assert texts == ["kept"]


def test_explicit_role_attribute_wins():
    page = _page('<div role="alert">Watch out</div>')
    assert any(n.role == "alert" for _, n in page.root.walk())


def test_images_need_alt_text_and_empty_generics_vanish():
    page = _page('<img src="x.png"><img src="y.png" alt="Named"><div></div>')
    roles = [n.role for _, n in page.root.walk()]
    assert roles.count("image") == 1
    assert "generic" not in roles


def test_headings_carry_their_level():
    page = _page("<h3>Deep</h3>")
    heading = next(n for _, n in page.root.walk() if n.role == "heading")
    assert heading.props["level"] == "3"


# --- form target computation ---


def _button_element(page):
    bid = next(b for b, n in page.bids.items() if n.role == "button")
    return page.element_of[bid]


def test_get_forms_serialize_controls_into_the_query():
    page = _page('<form action="go.html"><input type="hidden" name="k" value="v">'
                 '<input type="text" name="q" value="x y">'
                 '<input type="checkbox" name="c" value="1" checked>'
                 '<select name="s"><option value="o1" selected>One</option></select>'
                 '<button>Go</button></form>')
    target = form_target(page, _button_element(page))
    assert target == "http://shop.test/go.html?k=v&q=x+y&c=1&s=o1"


def test_unchecked_boxes_stay_out_and_post_forms_send_no_query():
    page = _page('<form action="go.html"><input type="checkbox" name="c" value="1">'
                 '<button>Go</button></form>')
    assert form_target(page, _button_element(page)) == "http://shop.test/go.html"
    page = _page('<form action="go.html" method="post">'
                 '<input type="text" name="q" value="x"><button>Go</button></form>')
    assert form_target(page, _button_element(page)) == "http://shop.test/go.html"


def test_formaction_overrides_and_bare_buttons_go_nowhere():
    page = _page('<form action="a.html"><button formaction="b.html">Go</button></form>')
    assert form_target(page, _button_element(page)) == "http://shop.test/b.html"
    page = _page("<button>Lonely</button>")
    assert form_target(page, _button_element(page)) is None
