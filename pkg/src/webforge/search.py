"""Lookahead action selection over a pluggable world model.

Per decision step the agent proposes candidates, the world model predicts the
page each one would produce, a value judge orders the outcomes, and the
winning action is the one actually executed in the environment.  The
completion judge lives here too because collection, search, and benchmarks
all share its Status-line contract.
"""

import math
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .a11y import A11yError, parse_a11y_text
from .actions import (
    Action,
    ActionError,
    action_space_lines,
    make_action,
    parse_action,
    render_action,
    validate_against_state,
)
from .environment import EnvError
from .gateway import GatewayError, GatewayHandle, extract_first_json, extract_tagged
from .prompts import fill, load_template

__all__ = [
    "Algorithm",
    "Scoring",
    "SimFormat",
    "SearchConfig",
    "CandidateEval",
    "EpisodeStep",
    "Episode",
    "Verdict",
    "STATUS_RE",
    "parse_status",
    "render_actions_list",
    "judge_completion",
    "EmptyCompletion",
    "simulate",
    "score_pointwise",
    "score_pairwise",
    "GraphAgent",
    "LlmAgent",
    "GraphWorldModel",
    "TableWorldModel",
    "LlmWorldModel",
    "OracleValueModel",
    "LlmValueModel",
    "run_episode",
    "best_of_n",
    "mcts",
    "hybrid",
    "greedy",
]


class Algorithm(Enum):
    GREEDY = "greedy"
    BON = "bon"
    MCTS = "mcts"
    HYBRID = "hybrid"


class Scoring(Enum):
    POINTWISE = "point"
    PAIRWISE = "pair"


class SimFormat(Enum):
    A11Y = "a11y"
    NATURAL_LANGUAGE = "nl"


class EmptyCompletion(Exception):
    pass


@dataclass(frozen=True)
class SearchConfig:
    algorithm: Algorithm = Algorithm.BON
    k: int = 3
    scoring: Scoring = Scoring.POINTWISE
    sim_format: SimFormat = SimFormat.A11Y
    uct_c: float = 1.0
    max_depth: int = 2
    rollouts: int = 16
    rng_seed: int = 0
    max_steps: int = 15

    def __post_init__(self):
        for name in ("k", "max_depth", "rollouts", "max_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.uct_c < 0:
            raise ValueError("uct_c must be >= 0")


@dataclass(frozen=True)
class CandidateEval:
    action: Action
    simulated_state: str
    sim_format: SimFormat = SimFormat.A11Y
    score: Optional[float] = None
    wins: Optional[int] = None
    verdict_raw: str = ""
    flagged: bool = False

    def __post_init__(self):
        if (self.score is None) == (self.wins is None):
            raise ValueError("exactly one of score/wins must be set")


@dataclass
class EpisodeStep:
    state: str
    chosen: Action
    next_state: str
    candidates: tuple = ()

    def to_obj(self) -> dict:
        cands = []
        for c in self.candidates:
            cands.append({
                "action": render_action(c.action),
                "simulated_state": c.simulated_state,
                "score": c.score, "wins": c.wins, "flagged": c.flagged,
            })
        return {"state": self.state, "chosen": render_action(self.chosen),
                "next_state": self.next_state, "candidates": cands}


@dataclass
class Episode:
    goal: str
    steps: list = field(default_factory=list)
    success: bool = False
    terminal: str = "cap"
    wm_calls: int = 0

    def actions(self) -> list:
        return [render_action(s.chosen) for s in self.steps]

    def to_obj(self) -> dict:
        return {"goal": self.goal, "success": self.success,
                "terminal": self.terminal, "wm_calls": self.wm_calls,
                "steps": [s.to_obj() for s in self.steps]}


# --- episode verdicts -----------------------------------------------------------------

class Verdict(Enum):
    SUCCESS = "SUCCESS"
    FAILURE = "FAILURE"
    ONGOING = "ONGOING"


# Square brackets around the status word are optional: judges emit both
# "Status: SUCCESS" and "Status: [SUCCESS]" in the wild.
STATUS_RE = re.compile(r"Status:\s*\[?(SUCCESS|FAILURE|ONGOING)\]?")

_STATUS_VALUE = {Verdict.SUCCESS: 1.0, Verdict.ONGOING: 0.5, Verdict.FAILURE: 0.0}


def parse_status(text: str) -> Optional[Verdict]:
    """Last Status line wins; reasoning inside <think> may mention earlier ones."""
    matches = STATUS_RE.findall(text)
    if not matches:
        return None
    return Verdict(matches[-1])


def render_actions_list(actions: Sequence) -> str:
    if not actions:
        return "(none)"
    return "\n".join(f"{i}. {a}" for i, a in enumerate(actions, start=1))


def judge_completion(
    gateway: GatewayHandle,
    goal: str,
    initial_obs: str,
    actions: Sequence,
    current_obs: str,
) -> tuple:
    """Ask the judge whether the episode satisfied the goal.

    Returns (Verdict, raw completion). Unavailable or twice-unparseable
    judges yield FAILURE -- retention must err toward discarding.
    """
    prompt = fill(
        load_template("judge_completion"),
        goal=goal,
        initial_obs=initial_obs,
        actions_str=render_actions_list(actions),
        current_obs=current_obs,
    )
    completion = ""
    for _ in range(2):
        try:
            completion = gateway.complete([{"role": "user", "content": prompt}])
        except GatewayError as err:
            return Verdict.FAILURE, f"judge unavailable: {err}"
        verdict = parse_status(completion)
        if verdict is not None:
            return verdict, completion
    return Verdict.FAILURE, completion


# --- history plumbing --------------------------------------------------------------------
#
# A history is [initial_state, (action_1, state_1), (action_2, state_2), ...]
# where actions are canonical renders and states are page texts.

def history_states(history: Sequence) -> list:
    return [history[0]] + [state for _, state in history[1:]]


def history_actions(history: Sequence) -> list:
    return [action for action, _ in history[1:]]


def current_state(history: Sequence) -> str:
    return history[-1][1] if len(history) > 1 else history[0]


# --- world-model simulation ------------------------------------------------------------

def _wm_messages(history: Sequence, action_render: str) -> list:
    first_action, later = None, []
    if len(history) > 1:
        first_action = history[1][0]
        later = list(history[2:])
    opening = f"Initial Page State: {history[0]} First Action: " + (
        f"'{first_action}'" if first_action else f"'{action_render}'")
    messages = [
        {"role": "system", "content": load_template("wm_system")},
        {"role": "user", "content": opening},
    ]
    if first_action is None:
        return messages
    messages.append({"role": "assistant", "content": history[1][1]})
    for past_action, state in later:
        messages.append({"role": "user",
                         "content": fill(load_template("wm_step"), action=past_action)})
        messages.append({"role": "assistant", "content": state})
    messages.append({"role": "user",
                     "content": fill(load_template("wm_step"), action=action_render)})
    return messages


def simulate(world_model: GatewayHandle, history: Sequence, action,
             sim_format: SimFormat = SimFormat.A11Y) -> str:
    """Predict the state `action` would produce; output is taken verbatim."""
    if not history:
        raise ValueError("history must contain at least the current state")
    rendered = action if isinstance(action, str) else render_action(action)
    completion = world_model.complete(_wm_messages(history, rendered))
    if completion.strip() == "":
        raise EmptyCompletion(f"world model returned no state for {rendered}")
    return completion


# --- value scoring --------------------------------------------------------------------

def score_pointwise(value_model: GatewayHandle, goal: str, history: Sequence,
                    candidate_state: str) -> tuple:
    """Map the judge's status onto [0,1]. Returns (score, raw, flagged)."""
    prompt = fill(
        load_template("judge_completion"),
        goal=goal,
        initial_obs=history[0] if history else "",
        actions_str=render_actions_list(history_actions(history) if history else []),
        current_obs=candidate_state,
    )
    completion = ""
    for _ in range(2):
        completion = value_model.complete([{"role": "user", "content": prompt}])
        verdict = parse_status(completion)
        if verdict is not None:
            return _STATUS_VALUE[verdict], completion, False
    return 0.0, completion, True


def score_pairwise(value_model: GatewayHandle, goal: str, candidates: Sequence,
                   rng_seed=0, history: Sequence = ()) -> tuple:
    """Round-robin comparisons; returns (win counts, skipped pair log).

    candidates: [(action, simulated_state), ...]; each unordered pair is
    judged once with A/B slot order drawn from the pair's own seed so that
    concurrent evaluation cannot reorder the randomness.
    """
    if len(candidates) < 2:
        raise ValueError("pairwise scoring needs at least two candidates")
    actions_str = render_actions_list(history_actions(history) if history else [])
    template = load_template("pairwise_value")
    wins = [0] * len(candidates)
    skipped = []
    for i in range(len(candidates)):
        for j in range(i + 1, len(candidates)):
            swap = random.Random(f"{rng_seed}:{i}:{j}").random() < 0.5
            a_idx, b_idx = (j, i) if swap else (i, j)
            prompt = fill(template, goal=goal, actions_str=actions_str,
                          option_A=candidates[a_idx][1],
                          option_B=candidates[b_idx][1])
            try:
                completion = value_model.complete(
                    [{"role": "user", "content": prompt}])
                choice = str(extract_first_json(completion).get("choice", "")).strip().upper()
                if choice not in ("A", "B"):
                    raise ValueError(f"choice must be A or B, got {choice!r}")
            except (GatewayError, ValueError) as err:
                skipped.append((i, j, str(err)))
                continue
            wins[a_idx if choice == "A" else b_idx] += 1
    return wins, skipped


# --- agents ---------------------------------------------------------------------------

class GraphAgent:
    """Proposes the outgoing edge actions of the current page, in file order."""

    def __init__(self, graph):
        self.graph = graph
        self._page_by_text = {graph.page_text(p): p for p in graph.pages}

    def propose(self, state: str, goal: str, k: int, rng: random.Random) -> list:
        page = self._page_by_text.get(state)
        if page is None:
            return []
        out = []
        for (src, rendered), _dst in self.graph.edges.items():
            if src == page:
                out.append(parse_action(rendered))
            if len(out) >= k:
                break
        return out


class LlmAgent:
    """Prompted policy; one completion per requested candidate."""

    def __init__(self, gateway: GatewayHandle, history_text: str = "(no interaction yet)"):
        self.gateway = gateway
        self.history_text = history_text

    def propose(self, state: str, goal: str, k: int, rng: random.Random) -> list:
        prompt = fill(load_template("actor"), goal=goal, observation=state,
                      history=self.history_text, action_space=action_space_lines())
        out = []
        for _ in range(k):
            completion = self.gateway.complete([{"role": "user", "content": prompt}])
            try:
                out.append(parse_action(extract_tagged(completion, "action").strip()))
            except (ValueError, ActionError):
                continue
        return out


# --- world models -----------------------------------------------------------------------

class GraphWorldModel:
    """Perfect simulator backed by the site graph's edge map."""

    def __init__(self, graph):
        self.graph = graph
        self._page_by_text = {graph.page_text(p): p for p in graph.pages}
        self.calls = 0

    def predict(self, history: Sequence, action, sim_format: SimFormat) -> str:
        if sim_format is not SimFormat.A11Y:
            raise ValueError("graph world model only simulates a11y states")
        self.calls += 1
        state = current_state(history)
        page = self._page_by_text.get(state)
        if page is None:
            return state
        rendered = action if isinstance(action, str) else render_action(action)
        target = self.graph.edges.get((page, rendered))
        return self.graph.page_text(target) if target else state


class TableWorldModel:
    """Simulator keyed by (state, rendered action); unknown pairs stay put."""

    def __init__(self, table: dict):
        self.table = dict(table)
        self.calls = 0

    def predict(self, history: Sequence, action, sim_format: SimFormat) -> str:
        self.calls += 1
        state = current_state(history)
        rendered = action if isinstance(action, str) else render_action(action)
        return self.table.get((state, rendered), state)


class LlmWorldModel:
    def __init__(self, gateway: GatewayHandle):
        self.gateway = gateway
        self.calls = 0

    def predict(self, history: Sequence, action, sim_format: SimFormat) -> str:
        self.calls += 1
        return simulate(self.gateway, history, action, sim_format)


# --- value models ------------------------------------------------------------------------

class OracleValueModel:
    """1.0 exactly on goal pages; for graph-truth experiments."""

    def __init__(self, graph):
        self.goal_texts = frozenset(graph.page_text(p) for p in graph.goal_pages)

    def point(self, goal: str, history: Sequence, candidate_state: str) -> tuple:
        return (1.0 if candidate_state in self.goal_texts else 0.0, "oracle", False)

    def pair(self, goal: str, candidates: Sequence, rng_seed=0,
             history: Sequence = ()) -> tuple:
        wins = [0] * len(candidates)
        for i in range(len(candidates)):
            for j in range(i + 1, len(candidates)):
                si = self.point(goal, history, candidates[i][1])[0]
                sj = self.point(goal, history, candidates[j][1])[0]
                wins[i if si >= sj else j] += 1
        return wins, []


class LlmValueModel:
    def __init__(self, gateway: GatewayHandle):
        self.gateway = gateway

    def point(self, goal: str, history: Sequence, candidate_state: str) -> tuple:
        return score_pointwise(self.gateway, goal, history, candidate_state)

    def pair(self, goal: str, candidates: Sequence, rng_seed=0,
             history: Sequence = ()) -> tuple:
        return score_pairwise(self.gateway, goal, candidates,
                              rng_seed=rng_seed, history=history)


# --- per-step choosers -------------------------------------------------------------------

def _dedupe(actions: Sequence) -> list:
    seen, out = set(), []
    for action in actions:
        key = render_action(action)
        if key not in seen:
            seen.add(key)
            out.append(action)
    return out


def _grounded(actions: Sequence, state: str) -> list:
    try:
        tree = parse_a11y_text(state)
    except (ValueError, A11yError):
        return list(actions)  # non-tree sim formats skip grounding checks
    out = []
    for action in actions:
        try:
            validate_against_state(action, tree)
            out.append(action)
        except ActionError:
            continue
    return out


def _fallback_action(agent, state, goal, rng) -> Action:
    fresh = agent.propose(state, goal, 1, rng)
    return fresh[0] if fresh else make_action("noop")


def _choose_greedy(agent, state, goal, rng):
    actions = agent.propose(state, goal, 1, rng)
    return (actions[0] if actions else make_action("noop")), (), 0


def _score_candidates(value, goal, history, sims, config, step_index):
    """sims: [(action, sim_state)] -> (chosen index, CandidateEval tuple)."""
    if config.scoring is Scoring.POINTWISE or len(sims) == 1:
        evals = []
        for action, sim_state in sims:
            try:
                score, raw, flagged = value.point(goal, history, sim_state)
            except GatewayError as err:
                score, raw, flagged = 0.0, f"judge unavailable: {err}", True
            evals.append(CandidateEval(action, sim_state, config.sim_format,
                                       score=score, verdict_raw=raw, flagged=flagged))
        top = max(e.score for e in evals)
        # ties fall to the lexicographically first rendering
        chosen = min((render_action(e.action), i) for i, e in enumerate(evals)
                     if e.score == top)[1]
        return chosen, tuple(evals)
    wins, _skipped = value.pair(goal, sims, rng_seed=f"{config.rng_seed}:{step_index}",
                                history=history)
    evals = tuple(CandidateEval(a, s, config.sim_format, wins=w)
                  for (a, s), w in zip(sims, wins))
    return wins.index(max(wins)), evals  # ties keep proposal order


def _choose_bon(agent, wm, value, state, goal, history, config, rng, step_index,
                candidates=None):
    actions = _dedupe(candidates if candidates is not None
                      else agent.propose(state, goal, config.k, rng))
    actions = _grounded(actions, state)
    if not actions:
        return _fallback_action(agent, state, goal, rng), (), 0
    sims = [(a, wm.predict(history, a, config.sim_format)) for a in actions]
    chosen, evals = _score_candidates(value, goal, history, sims, config, step_index)
    return actions[chosen], evals, len(sims)


def _choose_hybrid(agent, wm, value, state, goal, history, config, rng, step_index):
    proposals = agent.propose(state, goal, config.k, rng)
    distinct = _dedupe(proposals)
    if len(distinct) == 1:
        grounded = _grounded(distinct, state)
        if grounded:
            return grounded[0], (), 0  # agreement: act immediately, no lookahead
    if not distinct:
        return _fallback_action(agent, state, goal, rng), (), 0
    return _choose_bon(agent, wm, value, state, goal, history, config, rng,
                       step_index, candidates=distinct)


class _MctsStep:
    """One root decision: UCT over simulated states with pointwise leaves."""

    def __init__(self, agent, wm, value, goal, root_history, config, rng):
        self.agent, self.wm, self.value = agent, wm, value
        self.goal, self.config, self.rng = goal, config, rng
        self.root_history = list(root_history)
        self.proposals = {}    # state -> [Action]
        self.sim_cache = {}    # (state, render) -> state
        self.leaf_cache = {}   # state -> float
        self.visits = {}       # (state, render) -> int
        self.value_sum = {}    # (state, render) -> float
        self.wm_calls = 0

    def _expand(self, state):
        if state not in self.proposals:
            actions = _grounded(
                _dedupe(self.agent.propose(state, self.goal, self.config.k, self.rng)),
                state)
            self.proposals[state] = actions
        return self.proposals[state]

    def _sim(self, state, action, path):
        key = (state, render_action(action))
        if key not in self.sim_cache:
            history = self.root_history + [(render_action(a), s)
                                           for (_, a), s in path]
            self.sim_cache[key] = self.wm.predict(history, action,
                                                  self.config.sim_format)
            self.wm_calls += 1
        return self.sim_cache[key]

    def _leaf(self, state, path):
        if state not in self.leaf_cache:
            history = self.root_history + [(render_action(a), s)
                                           for (_, a), s in path]
            try:
                score, _raw, _flag = self.value.point(self.goal, history, state)
            except GatewayError:
                score = 0.0
            self.leaf_cache[state] = score
        return self.leaf_cache[state]

    def _select(self, state, children):
        stats = [(self.visits.get((state, render_action(a)), 0),
                  self.value_sum.get((state, render_action(a)), 0.0), a)
                 for a in children]
        for n, _w, action in stats:
            if n == 0:
                return action, True
        total = sum(n for n, _, _ in stats)
        best, best_score = None, None
        for n, w, action in stats:
            uct = w / n + self.config.uct_c * math.sqrt(math.log(total) / n)
            if best_score is None or uct > best_score:
                best, best_score = action, uct
        return best, False

    def rollout(self):
        state, path, depth = current_state(self.root_history), [], 0
        fresh_edge = False
        while depth < self.config.max_depth:
            children = self._expand(state)
            if not children:
                break
            action, fresh_edge = self._select(state, children)
            nxt = self._sim(state, action, path)
            path.append(((state, action), nxt))
            state, depth = nxt, depth + 1
            if fresh_edge:
                break
        leaf = self._leaf(state, path)
        for (s, a), _nxt in path:
            key = (s, render_action(a))
            self.visits[key] = self.visits.get(key, 0) + 1
            self.value_sum[key] = self.value_sum.get(key, 0.0) + leaf

    def choose(self):
        root = current_state(self.root_history)
        for _ in range(self.config.rollouts):
            self.rollout()
        children = self.proposals.get(root, [])
        if not children:
            return None, ()
        ranked = []
        for idx, action in enumerate(children):
            key = (root, render_action(action))
            n = self.visits.get(key, 0)
            mean = self.value_sum.get(key, 0.0) / n if n else 0.0
            ranked.append((n, mean, -idx, idx, action))
        ranked.sort(reverse=True)
        _n, _mean, _negidx, idx, action = ranked[0]
        evals = tuple(
            CandidateEval(a, self.sim_cache.get((root, render_action(a)), root),
                          self.config.sim_format,
                          score=(self.value_sum.get((root, render_action(a)), 0.0)
                                 / max(self.visits.get((root, render_action(a)), 0), 1)),
                          verdict_raw=f"visits={self.visits.get((root, render_action(a)), 0)}")
            for a in children)
        return action, evals


def _choose_mcts(agent, wm, value, state, goal, history, config, rng, step_index):
    step = _MctsStep(agent, wm, value, goal, history, config, rng)
    action, evals = step.choose()
    if action is None:
        return _fallback_action(agent, state, goal, rng), (), step.wm_calls
    return action, evals, step.wm_calls


# --- episode runner -----------------------------------------------------------------------

def run_episode(agent, world_model, value_model, env, goal: str,
                config: SearchConfig, url: Optional[str] = None) -> Episode:
    """Reset, then pick-and-execute actions until done / cap / env failure."""
    episode = Episode(goal=goal)
    rng = random.Random(config.rng_seed)
    try:
        obs = env.reset(url)
    except EnvError as err:
        episode.terminal = f"env_error: {err}"
        return episode
    history = [obs.a11y]
    if obs.done:
        episode.success, episode.terminal = True, "done"
        return episode
    for step_index in range(config.max_steps):
        state = current_state(history)
        if config.algorithm is Algorithm.GREEDY:
            action, evals, calls = _choose_greedy(agent, state, goal, rng)
        elif config.algorithm is Algorithm.BON:
            action, evals, calls = _choose_bon(
                agent, world_model, value_model, state, goal, history, config,
                rng, step_index)
        elif config.algorithm is Algorithm.HYBRID:
            action, evals, calls = _choose_hybrid(
                agent, world_model, value_model, state, goal, history, config,
                rng, step_index)
        else:
            action, evals, calls = _choose_mcts(
                agent, world_model, value_model, state, goal, history, config,
                rng, step_index)
        episode.wm_calls += calls
        try:
            obs = env.step(action)
        except (EnvError, ActionError) as err:
            episode.terminal = f"env_error: {err}"
            return episode
        episode.steps.append(EpisodeStep(state, action, obs.a11y, evals))
        history.append((render_action(action), obs.a11y))
        if obs.done:
            episode.success, episode.terminal = True, "done"
            return episode
    episode.terminal = "cap"
    return episode


def _require(config: SearchConfig, algorithm: Algorithm) -> SearchConfig:
    if config.algorithm is not algorithm:
        raise ValueError(f"config.algorithm is {config.algorithm}, need {algorithm}")
    return config


def best_of_n(agent, world_model, value_model, env, goal, config, url=None):
    return run_episode(agent, world_model, value_model, env, goal,
                       _require(config, Algorithm.BON), url)


def mcts(agent, world_model, value_model, env, goal, config, url=None):
    return run_episode(agent, world_model, value_model, env, goal,
                       _require(config, Algorithm.MCTS), url)


def hybrid(agent, world_model, value_model, env, goal, config, url=None):
    return run_episode(agent, world_model, value_model, env, goal,
                       _require(config, Algorithm.HYBRID), url)


def greedy(agent, env, goal, config, url=None):
    return run_episode(agent, None, None, env, goal,
                       _require(config, Algorithm.GREEDY), url)
