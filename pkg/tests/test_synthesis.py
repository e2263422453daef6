"""Synthesis tests. Yield numbers are hand-counted from scripted plans; CoT
fidelity is checked with a byte-suffix oracle over the emitted samples."""

import inspect
from collections import Counter

import pytest

from webforge.actions import parse_action, render_action
from webforge.environment import MockEnv, load_site_graph
from webforge.gateway import GatewayError, GatewayHandle, Role, ScriptedProvider
from webforge.prompts import fill, load_template
from webforge.synthesis import (
    CotSample,
    SynthConfig,
    SynthSeed,
    YieldReport,
    abstract_goal,
    instantiate_task,
    synthesize_batch,
    synthesize_cot,
    synthesize_cot_dataset,
)
from webforge.trajectory import Instruction, Origin, SourceLevel, Trajectory, Transition


def gw(provider, role=Role.SYNTH) -> GatewayHandle:
    return GatewayHandle(provider, role)


S0 = "[r1] RootWebArea 'Search' url=mock://synth/0\n\t[b1] textbox 'Query' visible"
S1 = "[r1] RootWebArea 'Results' url=mock://synth/1\n\t[b2] link 'First hit' visible"


def tiny_traj(states=None, actions=None, origin=Origin.ABSTRACT, text="explore"):
    states = [S0, S1] if states is None else states
    actions = ["click('b1')"] if actions is None else actions
    steps = tuple(Transition(states[i], parse_action(actions[i]), states[i + 1])
                  for i in range(len(actions)))
    return Trajectory(
        instruction=Instruction(text, origin),
        initial_state=states[0],
        steps=steps,
        source_level=SourceLevel.L2_AUTONOMOUS,
        format="a11y",
        meta={},
    )


@pytest.fixture(scope="module")
def shop(shop_graph_path):
    return load_site_graph(shop_graph_path)


# --- abstraction -----------------------------------------------------------------------

class TestAbstract:
    def test_scripted_strategy_returned(self):
        provider = ScriptedProvider(queue=["Probe the search flow end to end."])
        out = abstract_goal("Find cheap flights to Lisbon", S0, gw(provider))
        assert out == "Probe the search flow end to end."

    def test_empty_seed_is_a_precondition_error(self):
        provider = ScriptedProvider(default="never asked")
        with pytest.raises(ValueError):
            abstract_goal("", S0, gw(provider))
        with pytest.raises(ValueError):
            abstract_goal("   \n", S0, gw(provider))
        assert provider.calls == []

    def test_prompt_is_template_filled_verbatim(self):
        provider = ScriptedProvider(queue=["strategy"])
        abstract_goal("Book a hotel in Oslo", S0, gw(provider))
        expected = fill(load_template("abstraction"),
                        seed_goal="Book a hotel in Oslo", initial_obs=S0)
        assert provider.calls[0] == [{"role": "user", "content": expected}]

    def test_gateway_error_propagates(self):
        with pytest.raises(GatewayError):
            abstract_goal("seed", S0, gw(ScriptedProvider()))

    def test_redaction_stub_leaves_no_seed_entities(self):
        seed = "Book a one-way flight from Paris to Tokyo on May 3"
        reply = ("Interact with the flight form by filling in valid but random "
                 "city pairs and submit the search.")
        out = abstract_goal(seed, S0, gw(ScriptedProvider(queue=[reply])))
        for entity in ("Paris", "Tokyo", "May 3"):
            assert entity not in out


# --- instantiation ----------------------------------------------------------------------

class TestInstantiate:
    def test_literal_none_after_trim_and_casefold(self):
        for reply in ("NONE", " NONE \n", "none", "None"):
            out = instantiate_task(tiny_traj(), gw(ScriptedProvider(queue=[reply])))
            assert out is None, reply

    def test_partial_none_is_task_text(self):
        for reply in ("NONE.", "none found", "NONE of the filters work; fix them"):
            out = instantiate_task(tiny_traj(), gw(ScriptedProvider(queue=[reply])))
            assert out == reply.strip()

    def test_question_stored_trimmed(self):
        reply = "  How many search results mention Lisbon?  "
        out = instantiate_task(tiny_traj(), gw(ScriptedProvider(queue=[reply])))
        assert out == "How many search results mention Lisbon?"

    def test_prompt_carries_trajectory_context(self):
        provider = ScriptedProvider(queue=["task"])
        traj = tiny_traj()
        instantiate_task(traj, gw(provider))
        expected = fill(load_template("instantiation"), initial_obs=S0,
                        action_history="click('b1')", final_obs=S1)
        assert provider.calls[0] == [{"role": "user", "content": expected}]

    def test_empty_history_renders_placeholder(self):
        provider = ScriptedProvider(queue=["NONE"])
        traj = tiny_traj(states=[S0], actions=[])
        instantiate_task(traj, gw(provider))
        assert "Actions: (none)" in provider.calls[0][0]["content"]

    def test_multi_action_history_is_comma_joined(self):
        provider = ScriptedProvider(queue=["task"])
        traj = tiny_traj(states=[S0, S1, S0], actions=["click('b1')", "go_back()"])
        instantiate_task(traj, gw(provider))
        assert "Actions: click('b1'), go_back()" in provider.calls[0][0]["content"]


# --- chain-of-thought samples ------------------------------------------------------------

class TestCot:
    def transition(self):
        return Transition(S0, parse_action("click('b1')"), S1)

    def test_completion_wraps_rationale_and_ends_with_exact_state(self):
        provider = ScriptedProvider(queue=["The click submits the query."])
        sample = synthesize_cot("find hits", self.transition(), gw(provider))
        assert sample.completion == (
            "<think>\nThe click submits the query.\n</think>\n" + S1)
        assert sample.completion.encode().endswith(S1.encode())

    def test_prompt_embeds_task_and_markers(self):
        provider = ScriptedProvider(queue=["r"])
        sample = synthesize_cot("find hits", self.transition(), gw(provider))
        assert sample.prompt == (
            f"Task: 'find hits'\nInitial Page State: {S0} First Action: 'click('b1')'")

    def test_gateway_receives_filled_rationale_template(self):
        provider = ScriptedProvider(queue=["r"])
        synthesize_cot("find hits", self.transition(), gw(provider))
        expected = fill(load_template("cot_rationale"), instruction="find hits",
                        observation=S0, action="click('b1')", next_observation=S1)
        assert provider.calls[0] == [{"role": "user", "content": expected}]

    def test_rationale_whitespace_trimmed(self):
        provider = ScriptedProvider(queue=["  padded thought \n"])
        sample = synthesize_cot("t", self.transition(), gw(provider))
        assert sample.completion.startswith("<think>\npadded thought\n</think>\n")

    def test_dataset_caps_at_limit_and_defaults_to_thousand(self):
        corpus = [tiny_traj(states=[S0, S1, S0, S1],
                            actions=["click('b1')", "go_back()", "click('b1')"])
                  for _ in range(3)]  # nine transitions total
        provider = ScriptedProvider(default="why")
        samples = synthesize_cot_dataset(corpus, gw(provider), limit=5)
        assert len(samples) == 5
        assert len(synthesize_cot_dataset(corpus, gw(ScriptedProvider(default="w")))) == 9
        default = inspect.signature(synthesize_cot_dataset).parameters["limit"].default
        assert default == 1000

    def test_every_sample_ends_with_its_ground_truth_state(self):
        corpus = [tiny_traj(), tiny_traj(states=[S1, S0], actions=["go_back()"])]
        samples = synthesize_cot_dataset(corpus, gw(ScriptedProvider(default="w")))
        truths = [S1, S0]
        assert len(samples) == 2
        for sample, truth in zip(samples, truths):
            assert sample.completion.encode().endswith(truth.encode())

    def test_sample_roundtrips_to_obj(self):
        provider = ScriptedProvider(queue=["r"])
        sample = synthesize_cot("find hits", self.transition(), gw(provider))
        obj = sample.to_obj()
        assert set(obj) == {"prompt", "completion", "instruction", "action"}
        assert obj["action"] == "click('b1')"


# --- full batch loop -----------------------------------------------------------------------

def actor_reply(action: str) -> str:
    return f"<reason>\nnext move\n</reason>\n\n<action>\n{action}\n</action>"


EXPLORE = ["click('a4')", "send_msg_to_user('done looking')"]
REEXEC = ["click('a5')", "send_msg_to_user('cart is open')"]


class SynthRouter:
    """Routes on template prefix; pops actor/instantiation replies in order."""

    def __init__(self, abstract_reply, instantiate_replies, actor_replies):
        self.abstract_reply = abstract_reply
        self.instantiate = list(instantiate_replies)
        self.actor = list(actor_replies)
        self.counts = Counter()
        self.actor_prompts = []

    def complete(self, messages):
        prompt = messages[-1]["content"]
        if prompt.startswith("You are an expert Web Agent Strategist"):
            self.counts["abstract"] += 1
            return self.abstract_reply
        if prompt.startswith("You are inferring detailed users' questions"):
            self.counts["instantiate"] += 1
            return self.instantiate.pop(0)
        if prompt.startswith("You are an agent trying to solve a web task"):
            self.counts["actor"] += 1
            self.actor_prompts.append(prompt)
            return actor_reply(self.actor.pop(0))
        raise AssertionError(f"unexpected prompt: {prompt[:60]}")


SUCCESS = "<think>matches</think>\nStatus: [SUCCESS]"
FAILURE = "<think>nope</think>\nStatus: [FAILURE]"


class TestBatch:
    def run(self, shop, router, judge_replies, fanout=1, seeds=None):
        judge_provider = ScriptedProvider(queue=list(judge_replies))
        seeds = seeds or [SynthSeed("Buy the gadget", "https://shop.example/")]
        accepted, report = synthesize_batch(
            seeds, lambda: MockEnv(shop), gw(router), gw(judge_provider, Role.VALUE_JUDGE),
            SynthConfig(fanout=fanout, max_steps=5, rng_seed=0))
        return accepted, report, judge_provider

    def test_happy_path_accepts_with_full_provenance(self, shop):
        router = SynthRouter("Probe the cart flows.", ["Open the shopping cart."],
                             EXPLORE + REEXEC)
        accepted, report, _ = self.run(shop, router, [SUCCESS])
        assert report.attempts == 1 and report.accepted == 1
        assert report.rejected_failure == report.rejected_none == report.errored == 0
        traj = accepted[0]
        assert traj.instruction.text == "Open the shopping cart."
        assert traj.instruction.origin is Origin.CONCRETE
        assert traj.source_level is SourceLevel.L3_TASK
        meta = traj.meta
        assert meta["seed"] == "Buy the gadget"
        assert meta["abstract"] == "Probe the cart flows."
        assert meta["concrete"] == "Open the shopping cart."
        assert meta["verdict"] == "SUCCESS"

    def test_reexecution_starts_from_fresh_reset(self, shop):
        # exploration walks away to the catalog; the concrete run must begin
        # back at home for click('a5') to ground
        router = SynthRouter("Probe.", ["Open the cart."], EXPLORE + REEXEC)
        accepted, report, _ = self.run(shop, router, [SUCCESS])
        traj = accepted[0]
        assert traj.initial_state == shop.page_text("home")
        assert render_action(traj.steps[0].action) == "click('a5')"
        assert traj.steps[0].next_state == shop.page_text("cart_full")

    def test_none_instantiation_skips_judge(self, shop):
        router = SynthRouter("Probe.", ["NONE"], EXPLORE)
        accepted, report, judge_provider = self.run(shop, router, [])
        assert accepted == []
        assert report.rejected_none == 1 and report.attempts == 1
        assert judge_provider.calls == []

    def test_fanout_four_yield_accounting_matches_hand_count(self, shop):
        episode = EXPLORE + REEXEC
        router = SynthRouter(
            "Probe.",
            ["Open the cart.", "Open the cart.", "Open the cart.", "NONE"],
            episode * 3 + EXPLORE)
        accepted, report, _ = self.run(shop, router, [SUCCESS, FAILURE, SUCCESS],
                                       fanout=4)
        assert report.attempts == 4
        assert report.accepted == len(accepted) == 2
        assert report.rejected_failure == 1
        assert report.rejected_none == 1
        assert report.errored == 0
        assert report.accepted / report.attempts == 0.5  # acceptance by hand
        assert router.counts == {"abstract": 1, "instantiate": 4, "actor": 14}

    def test_ongoing_verdict_rejected_as_failure(self, shop):
        router = SynthRouter("Probe.", ["Open the cart."], EXPLORE + REEXEC)
        ongoing = "<think>half way</think>\nStatus: [ONGOING]"
        accepted, report, _ = self.run(shop, router, [ongoing])
        assert accepted == [] and report.rejected_failure == 1

    def test_goals_reach_the_right_actor_prompts(self, shop):
        router = SynthRouter("Chase every checkout affordance.", ["Open the cart."],
                             EXPLORE + REEXEC)
        self.run(shop, router, [SUCCESS])
        exploration, reexecution = router.actor_prompts[0], router.actor_prompts[-1]
        assert "Chase every checkout affordance." in exploration
        assert "Open the cart." in reexecution
        assert "Chase every checkout affordance." not in reexecution

    def test_unreachable_url_errors_whole_seed(self, shop):
        router = SynthRouter("Probe.", [], [])
        seeds = [SynthSeed("task", "https://nowhere.example/")]
        accepted, report, _ = self.run(shop, router, [], fanout=3, seeds=seeds)
        assert accepted == []
        assert report.attempts == 3 and report.errored == 3
        assert any(stage == "reset" for _, stage, _ in report.notes)

    def test_abstraction_gateway_failure_errors_whole_seed(self, shop):
        provider = ScriptedProvider()  # exhausted immediately
        judge = ScriptedProvider()
        accepted, report = synthesize_batch(
            [SynthSeed("task", "https://shop.example/")], lambda: MockEnv(shop),
            gw(provider), gw(judge, Role.VALUE_JUDGE),
            SynthConfig(fanout=2, max_steps=3, rng_seed=0))
        assert accepted == []
        assert report.attempts == 2 and report.errored == 2

    def test_empty_seed_text_raises(self, shop):
        router = SynthRouter("Probe.", [], [])
        with pytest.raises(ValueError):
            self.run(shop, router, [], seeds=[SynthSeed("", "https://shop.example/")])

    def test_yield_invariant_across_mixed_outcomes(self, shop):
        episode = EXPLORE + REEXEC
        router = SynthRouter("Probe.", ["Open the cart.", "NONE", "Open the cart."],
                             episode + EXPLORE + episode)
        accepted, report, _ = self.run(shop, router, [SUCCESS, FAILURE], fanout=3)
        total = (report.accepted + report.rejected_failure + report.rejected_none
                 + report.errored)
        assert total == report.attempts == 3
        obj = report.to_obj()
        assert obj["attempts"] == 3 and obj["accepted"] == 1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(fanout=0)
        with pytest.raises(ValueError):
            SynthConfig(max_steps=0)
