"""Three-level trajectory collection over an environment pool.

Level 1 walks pages with weighted random actions, level 2 lets a prompted
agent explore under a strategy charter, level 3 synthesizes concrete tasks
(seed -> variants -> paraphrases), executes them, and keeps judged successes.
"""

import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .a11y import A11yError, A11yTree, diff_trees, parse_a11y_text
from .actions import (
    INTERACTABLE_ROLES,
    ActionError,
    NoExecutableAction,
    Sampler,
    action_space_lines,
    parse_action,
    render_action,
    validate_against_state,
)
from .environment import EnvError
from .gateway import GatewayError, GatewayHandle, extract_tagged
from .prompts import fill, load_template
from .search import Verdict, judge_completion
from .trajectory import Instruction, Origin, SourceLevel, Trajectory, Transition

__all__ = [
    "Strategy",
    "CollectionPlan",
    "CollectionReport",
    "collect",
    "collect_randomized",
    "collect_autonomous",
    "collect_task_oriented",
]

HISTORY_BYTE_BUDGET = 8192
TERMINAL_PRIMITIVES = ("infeasible", "send_msg_to_user")


class Strategy(Enum):
    SELF_PROPOSED = "self_proposed"
    LONG_HORIZON = "long_horizon"
    COMPOSITE = "composite"
    CURIOSITY = "curiosity"

    @property
    def template_name(self) -> str:
        return f"l2_{self.value}"


@dataclass(frozen=True)
class CollectionPlan:
    level: SourceLevel
    url_list: tuple
    min_steps: Optional[int] = None  # resolved per level below
    max_steps: Optional[int] = None
    strategy: Strategy = Strategy.SELF_PROPOSED
    parallelism: int = 1
    rng_seed: int = 0
    l3_seeds: int = 2
    l3_variants: int = 2
    l3_paraphrases: int = 1

    def __post_init__(self):
        if self.level not in (SourceLevel.L1_RANDOM, SourceLevel.L2_AUTONOMOUS,
                              SourceLevel.L3_TASK):
            raise ValueError(f"cannot plan collection at level {self.level}")
        object.__setattr__(self, "url_list", tuple(self.url_list))
        lo, hi = self.min_steps, self.max_steps
        if lo is None:
            lo = 3 if self.level is SourceLevel.L1_RANDOM else 1
        if hi is None:
            hi = 10 if self.level is SourceLevel.L1_RANDOM else 30
        if lo <= 0 or hi <= 0 or lo > hi:
            raise ValueError(f"bad step bounds [{lo}, {hi}]")
        object.__setattr__(self, "min_steps", lo)
        object.__setattr__(self, "max_steps", hi)
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        for name in ("l3_seeds", "l3_variants", "l3_paraphrases"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class CollectionReport:
    sites: int = 0
    trajectories: int = 0
    errors: list = field(default_factory=list)  # (url, stage, message)
    notes: list = field(default_factory=list)   # (url, note)

    def to_obj(self) -> dict:
        return {
            "sites": self.sites,
            "trajectories": self.trajectories,
            "errors": [list(e) for e in self.errors],
            "notes": [list(n) for n in self.notes],
        }


def _zero_clock() -> float:
    return 0.0


def _site_rng(seed: int, url: str) -> random.Random:
    return random.Random(f"{seed}:{url}")


def _has_interactable(tree: A11yTree) -> bool:
    nodes = [n for n in tree.walk() if n.bid is not None]
    tracked = any(n.has_flag("visible") for n in nodes)
    for node in nodes:
        if node.role not in INTERACTABLE_ROLES:
            continue
        if tracked and not node.has_flag("visible"):
            continue
        return True
    return False


def _change_summary(before: str, after: str) -> str:
    try:
        return diff_trees(parse_a11y_text(before), parse_a11y_text(after)).render()
    except (ValueError, A11yError):
        return "no change" if before == after else "state changed"


def _render_history(pairs: list, budget: int = HISTORY_BYTE_BUDGET) -> str:
    """Most recent 5 (action, summary) pairs that fit the byte budget."""
    if not pairs:
        return "(no interaction yet)"
    lines = []
    used = 0
    for index, (action_text, summary) in reversed(list(enumerate(pairs, start=1))):
        line = f"{index}. {action_text} -> {summary}"
        cost = len(line.encode("utf-8")) + 1
        if lines and (len(lines) >= 5 or used + cost > budget):
            break
        lines.append(line)
        used += cost
    return "\n".join(reversed(lines))


def _exhausted(observations: list) -> bool:
    """Quiescence: the last three observations show no pairwise change."""
    if len(observations) < 3:
        return False
    tail = observations[-3:]
    for i in range(3):
        for j in range(i + 1, 3):
            if tail[i] == tail[j]:
                continue
            try:
                changed = not diff_trees(
                    parse_a11y_text(tail[i]), parse_a11y_text(tail[j])).is_empty()
            except (ValueError, A11yError):
                changed = True
            if changed:
                return False
    return True


def _numbered_lines(text: str, limit: int) -> list:
    out = []
    for line in text.splitlines():
        m = re.match(r"\s*\d+[.)]\s+(.*\S)", line)
        if m:
            out.append(m.group(1).strip())
        if len(out) >= limit:
            break
    return out


# --- level 1: randomized walks ---------------------------------------------------

def collect_randomized(
    plan: CollectionPlan,
    env_factory: Callable,
    weights: Optional[dict] = None,
    clock: Callable[[], float] = _zero_clock,
) -> tuple:
    if plan.level is not SourceLevel.L1_RANDOM:
        raise ValueError("collect_randomized requires an L1 plan")
    sampler = Sampler(weights=dict(weights)) if weights else Sampler()

    def one_site(url: str):
        env = env_factory()
        report = CollectionReport(sites=1)
        rng = _site_rng(plan.rng_seed, url)
        try:
            obs = env.reset(url)
        except EnvError as err:
            report.errors.append((url, "reset", str(err)))
            return [], report
        instruction = Instruction("", Origin.NONE)
        meta = {"url": obs.url, "source": url, "strategy": "random",
                "collected_at": clock()}
        try:
            start_tree = parse_a11y_text(obs.a11y)
        except A11yError as err:
            report.errors.append((url, "parse", str(err)))
            return [], report
        if not _has_interactable(start_tree):
            report.notes.append((url, "zero interactables; emitted empty trajectory"))
            traj = Trajectory(instruction, obs.a11y, (), SourceLevel.L1_RANDOM, meta=meta)
            report.trajectories = 1
            return [traj], report

        target = rng.randint(plan.min_steps, plan.max_steps)
        steps = []
        current = obs
        tree = start_tree
        while len(steps) < target:
            try:
                action = sampler.sample(tree, rng.randrange(2 ** 32))
                validate_against_state(action, tree)
            except NoExecutableAction as err:
                report.notes.append((url, f"stopped early: {err}"))
                break
            except ActionError as err:
                report.errors.append((url, "sample", str(err)))
                break
            try:
                nxt = env.step(action)
            except EnvError as err:
                report.errors.append((url, "step", str(err)))
                break
            steps.append(Transition(current.a11y, action, nxt.a11y))
            current = nxt
            try:
                tree = parse_a11y_text(current.a11y)
            except A11yError as err:
                report.errors.append((url, "parse", str(err)))
                break
        traj = Trajectory(instruction, obs.a11y, tuple(steps),
                          SourceLevel.L1_RANDOM, meta=meta)
        report.trajectories = 1
        return [traj], report

    return _run_sites(plan, one_site)


# --- level 2: autonomous exploration ----------------------------------------------

def _agent_step(gateway: GatewayHandle, goal: str, observation: str,
                history_text: str, tree: A11yTree):
    """One prompted decision. Returns (action | None, notes list).

    Raises GatewayError upward; a second malformed reply skips the step.
    """
    prompt = fill(
        load_template("actor"),
        goal=goal,
        observation=observation,
        history=history_text,
        action_space=action_space_lines(),
    )
    messages = [{"role": "user", "content": prompt}]
    notes = []
    completion = gateway.complete(messages)
    for attempt in (0, 1):
        try:
            text = extract_tagged(completion, "action").strip()
            action = parse_action(text)
            validate_against_state(action, tree)
            return action, notes
        except (ValueError, ActionError) as err:
            notes.append(f"attempt {attempt + 1} invalid: {err}")
            if attempt == 1:
                return None, notes
            messages = messages + [
                {"role": "assistant", "content": completion},
                {"role": "user",
                 "content": (f"Your previous action was invalid: {err}\n"
                             "Reply with a single corrected action in an "
                             "<action> block.")},
            ]
            completion = gateway.complete(messages)
    return None, notes


def _agent_episode(env, url: str, goal: str, gateway: GatewayHandle,
                   max_steps: int, report: CollectionReport):
    """Run the prompted agent until a terminal condition; returns
    (initial_obs, steps, terminal) or None when reset fails."""
    try:
        obs = env.reset(url)
    except EnvError as err:
        report.errors.append((url, "reset", str(err)))
        return None
    initial = obs
    steps = []
    observations = [obs.a11y]
    history = []
    terminal = "cap"
    # skipped steps still burn an attempt, so a stuck agent terminates
    for _attempt in range(max_steps):
        if _exhausted(observations):
            terminal = "exhausted"
            break
        try:
            tree = parse_a11y_text(obs.a11y)
        except A11yError as err:
            report.errors.append((url, "parse", str(err)))
            terminal = "env_error"
            break
        try:
            action, notes = _agent_step(gateway, goal, obs.a11y,
                                        _render_history(history), tree)
        except GatewayError as err:
            report.errors.append((url, "gateway", str(err)))
            terminal = "gateway_error"
            break
        for note in notes:
            report.notes.append((url, note))
        if action is None:
            report.notes.append((url, "step skipped after failed retry"))
            continue
        try:
            nxt = env.step(action)
        except EnvError as err:
            report.errors.append((url, "step", str(err)))
            terminal = "env_error"
            break
        steps.append(Transition(obs.a11y, action, nxt.a11y))
        history.append((render_action(action), _change_summary(obs.a11y, nxt.a11y)))
        observations.append(nxt.a11y)
        obs = nxt
        if action.primitive in TERMINAL_PRIMITIVES:
            terminal = action.primitive
            break
    return initial, steps, terminal


def collect_autonomous(
    plan: CollectionPlan,
    env_factory: Callable,
    gateway: GatewayHandle,
    clock: Callable[[], float] = _zero_clock,
) -> tuple:
    if plan.level is not SourceLevel.L2_AUTONOMOUS:
        raise ValueError("collect_autonomous requires an L2 plan")
    goal = load_template(plan.strategy.template_name)

    def one_site(url: str):
        env = env_factory()
        report = CollectionReport(sites=1)
        outcome = _agent_episode(env, url, goal, gateway, plan.max_steps, report)
        if outcome is None:
            return [], report
        initial, steps, terminal = outcome
        traj = Trajectory(
            Instruction(goal, Origin.SELF_PROPOSED),
            initial.a11y,
            tuple(steps),
            SourceLevel.L2_AUTONOMOUS,
            meta={"url": initial.url, "source": url,
                  "strategy": plan.strategy.value, "terminal": terminal,
                  "collected_at": clock()},
        )
        report.trajectories = 1
        return [traj], report

    return _run_sites(plan, one_site)


# --- level 3: task-oriented collection ---------------------------------------------

def _fanout(gateway: GatewayHandle, url: str, start_obs: str,
            plan: CollectionPlan, report: CollectionReport) -> list:
    """seed -> variants -> paraphrases; returns the paraphrase-level task list."""
    def ask(template_name: str, limit: int, **slots) -> list:
        prompt = fill(load_template(template_name), n=str(limit), **slots)
        completion = gateway.complete([{"role": "user", "content": prompt}])
        got = _numbered_lines(completion, limit)
        if len(got) < limit:
            report.notes.append(
                (url, f"{template_name} returned {len(got)}/{limit} lines"))
        return got

    tasks = []
    seeds = ask("task_seed", plan.l3_seeds, observation=start_obs)
    for seed in seeds:
        variants = ask("task_variants", plan.l3_variants,
                       task=seed, observation=start_obs)
        for variant in variants:
            tasks.extend(ask("task_paraphrase", plan.l3_paraphrases, task=variant))
    return tasks


def collect_task_oriented(
    plan: CollectionPlan,
    env_factory: Callable,
    gateway: GatewayHandle,
    clock: Callable[[], float] = _zero_clock,
) -> tuple:
    if plan.level is not SourceLevel.L3_TASK:
        raise ValueError("collect_task_oriented requires an L3 plan")

    def one_site(url: str):
        env = env_factory()
        report = CollectionReport(sites=1)
        try:
            start = env.reset(url)
        except EnvError as err:
            report.errors.append((url, "reset", str(err)))
            return [], report
        try:
            tasks = _fanout(gateway, url, start.a11y, plan, report)
        except GatewayError as err:
            report.errors.append((url, "fanout", str(err)))
            return [], report
        kept = []
        for task in tasks:
            outcome = _agent_episode(env, url, task, gateway, plan.max_steps, report)
            if outcome is None:
                continue
            initial, steps, terminal = outcome
            verdict, _raw = judge_completion(
                gateway, task, initial.a11y,
                [render_action(s.action) for s in steps],
                steps[-1].next_state if steps else initial.a11y)
            if verdict is not Verdict.SUCCESS:
                report.notes.append((url, f"task discarded ({verdict.value}): {task}"))
                continue
            kept.append(Trajectory(
                Instruction(task, Origin.SYNTHESIZED_SEED),
                initial.a11y,
                tuple(steps),
                SourceLevel.L3_TASK,
                meta={"url": initial.url, "source": url, "task": task,
                      "verdict": verdict.value, "terminal": terminal,
                      "collected_at": clock()},
            ))
        report.trajectories = len(kept)
        return kept, report

    return _run_sites(plan, one_site)


# --- shared driver ------------------------------------------------------------------

def _run_sites(plan: CollectionPlan, one_site: Callable) -> tuple:
    """Fan out across sites; merge in url_list order regardless of finish order."""
    if plan.parallelism == 1:
        results = [one_site(url) for url in plan.url_list]
    else:
        with ThreadPoolExecutor(max_workers=plan.parallelism) as pool:
            results = list(pool.map(one_site, plan.url_list))
    trajectories = []
    merged = CollectionReport()
    for trajs, rep in results:
        trajectories.extend(trajs)
        merged.sites += rep.sites
        merged.trajectories += rep.trajectories
        merged.errors.extend(rep.errors)
        merged.notes.extend(rep.notes)
    return trajectories, merged


def collect(
    plan: CollectionPlan,
    env_factory: Callable,
    gateway: Optional[GatewayHandle] = None,
    weights: Optional[dict] = None,
    clock: Callable[[], float] = _zero_clock,
) -> tuple:
    """Dispatch on plan.level; gateway is required beyond level 1."""
    if plan.level is SourceLevel.L1_RANDOM:
        return collect_randomized(plan, env_factory, weights=weights, clock=clock)
    if gateway is None:
        raise ValueError(f"{plan.level.value} collection needs a gateway")
    if plan.level is SourceLevel.L2_AUTONOMOUS:
        return collect_autonomous(plan, env_factory, gateway, clock=clock)
    return collect_task_oriented(plan, env_factory, gateway, clock=clock)
