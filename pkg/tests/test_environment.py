"""Mock environment, site-graph loader, and wire-protocol tests.

Graph-walk expectations come from an independent walk over the raw JSON
edge list, never from SiteGraph/MockEnv themselves.
"""

import io
import json
import threading

import pytest

from webforge.a11y import diff_trees, parse_a11y_text
from webforge.actions import GroundingError, VisibilityError, parse_action
from webforge.environment import (
    ERR_BAD_ACTION,
    ERR_GROUNDING,
    ERR_NAV_FAIL,
    ERR_NO_SESSION,
    ERR_PROTOCOL,
    EnvClient,
    EnvUnavailable,
    MockEnv,
    NavigationFailure,
    NoSession,
    SchemaError,
    check_transcript,
    handle_request,
    load_site_graph,
    record_transcript,
    run_conformance,
    serve,
    site_graph_from_obj,
    site_graph_to_obj,
)


# --- oracles ---------------------------------------------------------------------------

def oracle_raw(path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def oracle_walk(raw: dict, actions: list) -> str:
    """Independent edge-map walk over the raw JSON."""
    emap = {(e["from"], e["action"]): e["to"] for e in raw["edges"]}
    page = raw["start"]
    for action in actions:
        page = emap.get((page, action), page)
    return page


GOAL_WALK = ["click('a5')", "click('c12')", "click('k8')"]


@pytest.fixture
def shop(shop_graph_path):
    return load_site_graph(shop_graph_path)


@pytest.fixture
def shop_raw(shop_graph_path):
    return oracle_raw(shop_graph_path)


def minimal_obj(**overrides) -> dict:
    obj = {
        "v": 1,
        "start": "only",
        "goal_pages": [],
        "fail_pages": [],
        "pages": {"only": "[r1] RootWebArea 'One page'\n\t[b1] button 'Stay' visible"},
        "edges": [],
    }
    obj.update(overrides)
    return obj


# --- loader ----------------------------------------------------------------------------

class TestLoader:
    def test_minimal_graph(self):
        graph = site_graph_from_obj(minimal_obj())
        assert graph.start == "only"
        assert list(graph.pages) == ["only"]

    def test_dangling_edge_target(self):
        obj = minimal_obj(edges=[{"from": "only", "action": "click('b1')", "to": "ghost"}])
        with pytest.raises(SchemaError, match="ghost"):
            site_graph_from_obj(obj)

    def test_dangling_edge_source(self):
        obj = minimal_obj(edges=[{"from": "ghost", "action": "click('b1')", "to": "only"}])
        with pytest.raises(SchemaError, match="ghost"):
            site_graph_from_obj(obj)

    def test_duplicate_edge(self):
        edge = {"from": "only", "action": "click('b1')", "to": "only"}
        with pytest.raises(SchemaError, match="duplicate"):
            site_graph_from_obj(minimal_obj(edges=[edge, dict(edge)]))

    def test_edge_bid_must_exist_in_source_page(self):
        obj = minimal_obj(edges=[{"from": "only", "action": "click('nope')", "to": "only"}])
        with pytest.raises(SchemaError, match="nope"):
            site_graph_from_obj(obj)

    def test_unknown_start(self):
        with pytest.raises(SchemaError, match="start"):
            site_graph_from_obj(minimal_obj(start="elsewhere"))

    def test_goal_must_be_a_page(self):
        with pytest.raises(SchemaError, match="goal"):
            site_graph_from_obj(minimal_obj(goal_pages=["ghost"]))

    def test_bad_version(self):
        with pytest.raises(SchemaError):
            site_graph_from_obj(minimal_obj(v=2))

    def test_malformed_page_text(self):
        with pytest.raises(SchemaError, match="only"):
            site_graph_from_obj(minimal_obj(pages={"only": "\t[x] button 'jump'"}))

    def test_bad_edge_action_text(self):
        obj = minimal_obj(edges=[{"from": "only", "action": "click(", "to": "only"}])
        with pytest.raises(SchemaError, match="action"):
            site_graph_from_obj(obj)

    def test_shop_page_count_matches_raw(self, shop, shop_raw):
        assert len(shop.pages) == len(shop_raw["pages"]) == 14
        assert len(shop.edges) == len(shop_raw["edges"])

    def test_trap_loads(self, trap_graph_path):
        graph = load_site_graph(trap_graph_path)
        assert len(graph.pages) == 5
        assert graph.goal_pages == frozenset({"goal"})

    def test_to_obj_round_trip(self, shop):
        again = site_graph_from_obj(site_graph_to_obj(shop))
        assert again.edges == shop.edges
        assert again.start == shop.start
        assert {p: again.page_text(p) for p in again.pages} == (
            {p: shop.page_text(p) for p in shop.pages})

    def test_not_json_file(self, tmp_path):
        bad = tmp_path / "g.sitegraph"
        bad.write_text("{nope", encoding="utf-8")
        with pytest.raises(SchemaError):
            load_site_graph(bad)


# --- mock environment ---------------------------------------------------------------------

class TestMockEnv:
    def test_reset_returns_start_page(self, shop, shop_raw):
        env = MockEnv(shop)
        obs = env.reset()
        assert obs.a11y == shop_raw["pages"]["home"]
        assert obs.url == "https://shop.example/"
        assert obs.done is False

    def test_reset_unknown_page(self, shop):
        with pytest.raises(EnvUnavailable):
            MockEnv(shop).reset("not-a-page")

    def test_reset_by_page_id_and_by_url(self, shop, shop_raw):
        env = MockEnv(shop)
        assert env.reset("help").a11y == shop_raw["pages"]["help"]
        assert env.reset("https://shop.example/cart").a11y == shop_raw["pages"]["cart_full"]

    def test_step_before_reset(self, shop):
        with pytest.raises(NoSession):
            MockEnv(shop).step(parse_action("noop()"))

    def test_edge_step_follows_graph(self, shop, shop_raw):
        env = MockEnv(shop)
        env.reset()
        obs = env.step(parse_action("click('a5')"))
        expected_page = oracle_walk(shop_raw, ["click('a5')"])
        assert obs.a11y == shop_raw["pages"][expected_page]

    def test_unmapped_action_same_page(self, shop):
        env = MockEnv(shop)
        before = env.reset()
        after = env.step(parse_action("click('a10')"))  # grounded, no edge
        change = diff_trees(parse_a11y_text(before.a11y), parse_a11y_text(after.a11y))
        assert change.is_empty()

    def test_goal_walk_matches_oracle(self, shop, shop_raw):
        env = MockEnv(shop)
        env.reset()
        for text in GOAL_WALK:
            obs = env.step(parse_action(text))
        assert oracle_walk(shop_raw, GOAL_WALK) == "thanks"
        assert obs.a11y == shop_raw["pages"]["thanks"]
        assert obs.done is True

    def test_determinism(self, shop):
        def run():
            env = MockEnv(shop)
            out = [env.reset()]
            for text in GOAL_WALK + ["noop()", "go_back()"]:
                out.append(env.step(parse_action(text)))
            return out
        assert run() == run()

    def test_nav_fail_leaves_state(self, shop, shop_raw):
        env = MockEnv(shop)
        env.reset()
        env.step(parse_action("click('a4')"))  # -> catalog
        with pytest.raises(NavigationFailure):
            env.step(parse_action("click('g9')"))  # -> broken, fails to load
        assert env.observe().a11y == shop_raw["pages"]["catalog"]

    def test_reset_to_fail_page(self, shop):
        with pytest.raises(NavigationFailure):
            MockEnv(shop).reset("broken")

    def test_goto_page_id_navigates(self, shop, shop_raw):
        env = MockEnv(shop)
        env.reset()
        obs = env.step(parse_action("goto('p_c15')"))
        assert obs.a11y == shop_raw["pages"]["p_c15"]

    def test_goto_unknown_is_stationary(self, shop, shop_raw):
        env = MockEnv(shop)
        env.reset()
        obs = env.step(parse_action("goto('https://elsewhere.example/')"))
        assert obs.a11y == shop_raw["pages"]["home"]

    def test_history_back_and_forward(self, shop, shop_raw):
        env = MockEnv(shop)
        env.reset()
        env.step(parse_action("click('a5')"))
        back = env.step(parse_action("go_back()"))
        assert back.a11y == shop_raw["pages"]["home"]
        fwd = env.step(parse_action("go_fwd()"))
        assert fwd.a11y == shop_raw["pages"]["cart_full"]

    def test_back_on_fresh_session_is_noop(self, shop, shop_raw):
        env = MockEnv(shop)
        env.reset()
        assert env.step(parse_action("go_back()")).a11y == shop_raw["pages"]["home"]

    def test_tabs(self, shop, shop_raw):
        env = MockEnv(shop)
        env.reset("help")
        obs = env.step(parse_action("tab_new()"))
        assert obs.a11y == shop_raw["pages"]["home"]  # new tab opens the start page
        obs = env.step(parse_action("tab_focus(0)"))
        assert obs.a11y == shop_raw["pages"]["help"]
        obs = env.step(parse_action("tab_focus(7)"))  # out of range: stay put
        assert obs.a11y == shop_raw["pages"]["help"]
        obs = env.step(parse_action("tab_close()"))
        assert obs.a11y == shop_raw["pages"]["home"]  # only the other tab remains
        obs = env.step(parse_action("tab_close()"))  # last tab: no-op
        assert obs.a11y == shop_raw["pages"]["home"]

    def test_tab_histories_independent(self, shop, shop_raw):
        env = MockEnv(shop)
        env.reset()
        env.step(parse_action("click('a5')"))  # tab 0 -> cart
        env.step(parse_action("tab_new()"))  # tab 1 at home
        obs = env.step(parse_action("go_back()"))  # tab 1 has no history
        assert obs.a11y == shop_raw["pages"]["home"]
        obs = env.step(parse_action("tab_focus(0)"))
        assert obs.a11y == shop_raw["pages"]["cart_full"]

    def test_grounding_and_visibility_errors(self, shop):
        env = MockEnv(shop)
        env.reset()
        with pytest.raises(GroundingError):
            env.step(parse_action("click('zz99')"))
        with pytest.raises(VisibilityError):
            env.step(parse_action("click('a7')"))  # main region carries no visible flag

    def test_step_never_mutates_graph(self, shop):
        env = MockEnv(shop)
        pages_before = dict(shop.pages)
        edges_before = dict(shop.edges)
        env.reset()
        for text in ["click('a5')", "noop()", "go_back()", "tab_new()", "goto('help')"]:
            env.step(parse_action(text))
        assert shop.pages == pages_before
        assert shop.edges == edges_before


# --- protocol ------------------------------------------------------------------------

def make_send(graph):
    """Stateful single-connection transport over handle_request."""
    env = MockEnv(graph)
    state = {"last_id": 0}

    def send(request: dict) -> dict:
        response, state["last_id"] = handle_request(env, request, state["last_id"])
        return response

    return send


class TestProtocol:
    def test_reset_step_exchange(self, shop, shop_raw):
        send = make_send(shop)
        resp = send({"v": 1, "id": 1, "kind": "RESET"})
        assert resp["kind"] == "OBSERVATION"
        assert resp["id"] == 1
        assert resp["a11y"] == shop_raw["pages"]["home"]
        assert resp["done"] is False
        resp = send({"v": 1, "id": 2, "kind": "STEP", "action": "click('a5')"})
        assert resp["a11y"] == shop_raw["pages"]["cart_full"]

    def test_step_without_reset(self, shop):
        send = make_send(shop)
        resp = send({"v": 1, "id": 1, "kind": "STEP", "action": "noop()"})
        assert resp == {"v": 1, "id": 1, "kind": "ERROR", "code": ERR_NO_SESSION,
                        "detail": "reset before stepping"}

    def test_bad_action_text(self, shop):
        send = make_send(shop)
        send({"v": 1, "id": 1, "kind": "RESET"})
        resp = send({"v": 1, "id": 2, "kind": "STEP", "action": "click("})
        assert resp["kind"] == "ERROR" and resp["code"] == ERR_BAD_ACTION

    def test_grounding_error_code(self, shop):
        send = make_send(shop)
        send({"v": 1, "id": 1, "kind": "RESET"})
        resp = send({"v": 1, "id": 2, "kind": "STEP", "action": "click('zz')"})
        assert resp["code"] == ERR_GROUNDING

    def test_nav_fail_code(self, shop):
        send = make_send(shop)
        resp = send({"v": 1, "id": 1, "kind": "RESET", "url": "broken"})
        assert resp["code"] == ERR_NAV_FAIL

    def test_ids_must_increase(self, shop):
        send = make_send(shop)
        send({"v": 1, "id": 5, "kind": "RESET"})
        resp = send({"v": 1, "id": 5, "kind": "STEP", "action": "noop()"})
        assert resp["kind"] == "ERROR" and resp["code"] == ERR_PROTOCOL
        resp = send({"v": 1, "id": 4, "kind": "STEP", "action": "noop()"})
        assert resp["code"] == ERR_PROTOCOL
        resp = send({"v": 1, "id": 6, "kind": "STEP", "action": "noop()"})
        assert resp["kind"] == "OBSERVATION"

    def test_version_enforced(self, shop):
        send = make_send(shop)
        resp = send({"v": 3, "id": 1, "kind": "RESET"})
        assert resp["kind"] == "ERROR" and resp["code"] == ERR_PROTOCOL

    def test_unknown_kind(self, shop):
        send = make_send(shop)
        resp = send({"v": 1, "id": 1, "kind": "DANCE"})
        assert resp["kind"] == "ERROR" and resp["code"] == ERR_PROTOCOL

    def test_serve_loop_ndjson(self, shop, shop_raw):
        requests = [
            {"v": 1, "id": 1, "kind": "RESET"},
            {"v": 1, "id": 2, "kind": "STEP", "action": "click('a5')"},
            "this is not json",
            {"v": 1, "id": 3, "kind": "STEP", "action": "noop()"},
        ]
        lines = [r if isinstance(r, str) else json.dumps(r) for r in requests]
        rfile = io.StringIO("\n".join(lines) + "\n")
        wfile = io.StringIO()
        serve(MockEnv(shop), rfile, wfile)
        responses = [json.loads(l) for l in wfile.getvalue().splitlines()]
        assert len(responses) == 4
        assert responses[0]["kind"] == "OBSERVATION"
        assert responses[1]["a11y"] == shop_raw["pages"]["cart_full"]
        assert responses[2]["kind"] == "ERROR" and responses[2]["code"] == ERR_PROTOCOL
        assert responses[3]["kind"] == "OBSERVATION"  # session survives junk input

    def test_client_over_streams(self, shop, shop_raw):
        import os
        r1, w1 = os.pipe()  # client -> server
        r2, w2 = os.pipe()  # server -> client
        server_r = os.fdopen(r1, "r", encoding="utf-8")
        server_w = os.fdopen(w2, "w", encoding="utf-8")
        client_w = os.fdopen(w1, "w", encoding="utf-8")
        client_r = os.fdopen(r2, "r", encoding="utf-8")
        thread = threading.Thread(target=serve, args=(MockEnv(shop), server_r, server_w))
        thread.start()
        try:
            client = EnvClient.over_streams(client_w, client_r)
            obs = client.reset()
            assert obs.a11y == shop_raw["pages"]["home"]
            obs = client.step(parse_action("click('a5')"))
            assert obs.a11y == shop_raw["pages"]["cart_full"]
            with pytest.raises(NavigationFailure):
                client.reset("broken")
        finally:
            client_w.close()
            thread.join(timeout=5)
            server_w.close()
            client_r.close()

    def test_client_raises_typed_errors(self, shop):
        send = make_send(shop)
        client = EnvClient(send)
        with pytest.raises(NoSession):
            client.step(parse_action("noop()"))
        client.reset()
        with pytest.raises(GroundingError):
            client.step(parse_action("click('zz')"))
        with pytest.raises(NavigationFailure):
            client.reset("broken")


# --- conformance ---------------------------------------------------------------------------

class TestConformance:
    def test_mock_passes_generic_checks(self, shop):
        results = run_conformance(make_send(shop))
        failing = [r for r in results if not r.ok]
        assert failing == [], failing

    def test_trap_passes_too(self, trap_graph_path):
        graph = load_site_graph(trap_graph_path)
        results = run_conformance(make_send(graph))
        assert all(r.ok for r in results)

    def test_broken_env_caught(self, shop):
        real = make_send(shop)

        def lying_send(request):  # answers observations even before reset
            request = dict(request, kind="RESET")
            return real(request)

        results = run_conformance(lying_send)
        assert any(not r.ok for r in results)

    def test_record_then_check(self, shop):
        script = [
            {"v": 1, "id": 1, "kind": "RESET"},
            {"v": 1, "id": 2, "kind": "STEP", "action": "click('a5')"},
            {"v": 1, "id": 3, "kind": "STEP", "action": "click('c12')"},
            {"v": 1, "id": 4, "kind": "STEP", "action": "click('k8')"},
        ]
        records = record_transcript(make_send(shop), script)
        assert records[-1]["response"]["done"] is True
        results = check_transcript(make_send(shop), records)
        assert all(r.ok for r in results)

    def test_check_flags_divergence(self, shop):
        script = [{"v": 1, "id": 1, "kind": "RESET"}]
        records = record_transcript(make_send(shop), script)
        records[0]["response"]["a11y"] = "tampered"
        results = check_transcript(make_send(shop), records)
        assert not results[0].ok
