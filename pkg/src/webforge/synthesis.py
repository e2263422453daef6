"""Seed-task synthesis: abstracted goals, explore-then-instantiate trajectory
generation with rejection sampling, and reasoning-annotated training samples."""

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .actions import render_action
from .collector import CollectionReport, _agent_episode
from .environment import EnvError
from .gateway import GatewayError, GatewayHandle
from .prompts import fill, load_template
from .search import Verdict, judge_completion
from .trajectory import Instruction, Origin, SourceLevel, Trajectory, Transition


@dataclass(frozen=True, slots=True)
class SynthSeed:
    task: str
    url: str


@dataclass(frozen=True, slots=True)
class SynthConfig:
    fanout: int = 2
    max_steps: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        if self.fanout < 1:
            raise ValueError("fanout must be at least 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass
class YieldReport:
    attempts: int = 0
    accepted: int = 0
    rejected_failure: int = 0
    rejected_none: int = 0
    errored: int = 0
    notes: list = field(default_factory=list)  # (seed task, stage, detail)

    def to_obj(self) -> dict:
        return {
            "attempts": self.attempts,
            "accepted": self.accepted,
            "rejected_failure": self.rejected_failure,
            "rejected_none": self.rejected_none,
            "errored": self.errored,
            "notes": [list(note) for note in self.notes],
        }


@dataclass(frozen=True, slots=True)
class CotSample:
    prompt: str
    completion: str
    instruction: str
    action: str

    def to_obj(self) -> dict:
        return {"prompt": self.prompt, "completion": self.completion,
                "instruction": self.instruction, "action": self.action}


def abstract_goal(seed_task: str, initial_obs: str,
                  gateway: GatewayHandle) -> str:
    if not seed_task.strip():
        raise ValueError("seed task is empty")
    prompt = fill(load_template("abstraction"), seed_goal=seed_task,
                  initial_obs=initial_obs)
    return gateway.complete([{"role": "user", "content": prompt}]).strip()


def instantiate_task(trajectory: Trajectory,
                     gateway: GatewayHandle) -> Optional[str]:
    renders = [render_action(step.action) for step in trajectory.steps]
    history = ", ".join(renders) if renders else "(none)"
    prompt = fill(load_template("instantiation"),
                  initial_obs=trajectory.initial_state,
                  action_history=history,
                  final_obs=trajectory.final_state())
    completion = gateway.complete([{"role": "user", "content": prompt}]).strip()
    if completion.casefold() == "none":
        return None
    return completion


def synthesize_cot(instruction: str, transition: Transition,
                   gateway: GatewayHandle) -> CotSample:
    rendered = render_action(transition.action)
    rationale_prompt = fill(load_template("cot_rationale"),
                            instruction=instruction,
                            observation=transition.state,
                            action=rendered,
                            next_observation=transition.next_state)
    rationale = gateway.complete(
        [{"role": "user", "content": rationale_prompt}]).strip()
    # the target state is copied through untouched: reasoning must never leak
    # into the supervised next-state bytes
    completion = f"<think>\n{rationale}\n</think>\n{transition.next_state}"
    prompt = (f"Task: '{instruction}'\n"
              f"Initial Page State: {transition.state} First Action: '{rendered}'")
    return CotSample(prompt=prompt, completion=completion,
                     instruction=instruction, action=rendered)


def synthesize_cot_dataset(trajectories: Iterable[Trajectory],
                           gateway: GatewayHandle, limit: int = 1000) -> list:
    samples = []
    for traj in trajectories:
        for step in traj.steps:
            if limit is not None and len(samples) >= limit:
                return samples
            samples.append(synthesize_cot(traj.instruction.text, step, gateway))
    return samples


def _merge_notes(seed: SynthSeed, scratch: CollectionReport,
                 report: "YieldReport") -> None:
    for _url, stage, detail in scratch.errors:
        report.notes.append((seed.task, stage, detail))
    for _url, note in scratch.notes:
        report.notes.append((seed.task, "episode", note))


def _attempt(seed: SynthSeed, abstract: str, env, gateway: GatewayHandle,
             judge: GatewayHandle, config: SynthConfig, attempt: int,
             report: YieldReport) -> Optional[Trajectory]:
    scratch = CollectionReport()
    episode = _agent_episode(env, seed.url, abstract, gateway,
                             config.max_steps, scratch)
    _merge_notes(seed, scratch, report)
    if episode is None:
        report.errored += 1
        return None
    initial_obs, steps, terminal = episode
    exploration = Trajectory(
        instruction=Instruction(abstract, Origin.ABSTRACT),
        initial_state=initial_obs.a11y,
        steps=tuple(steps),
        source_level=SourceLevel.L2_AUTONOMOUS,
        format="a11y",
        meta={"seed": seed.task, "terminal": terminal},
    )
    try:
        concrete = instantiate_task(exploration, gateway)
    except GatewayError as err:
        report.errored += 1
        report.notes.append((seed.task, "instantiate", str(err)))
        return None
    if concrete is None:
        report.rejected_none += 1
        report.notes.append((seed.task, "instantiate", "no concrete task (NONE)"))
        return None

    # the concrete task runs from a clean reset, never from where exploration
    # happened to stop
    scratch = CollectionReport()
    episode = _agent_episode(env, seed.url, concrete, gateway,
                             config.max_steps, scratch)
    _merge_notes(seed, scratch, report)
    if episode is None:
        report.errored += 1
        return None
    initial_obs, steps, terminal = episode
    renders = [render_action(step.action) for step in steps]
    final_state = steps[-1].next_state if steps else initial_obs.a11y
    verdict, _raw = judge_completion(judge, concrete, initial_obs.a11y,
                                     renders, final_state)
    if verdict is not Verdict.SUCCESS:
        report.rejected_failure += 1
        report.notes.append((seed.task, "judge", f"{verdict.value}: {concrete}"))
        return None
    report.accepted += 1
    return Trajectory(
        instruction=Instruction(concrete, Origin.CONCRETE),
        initial_state=initial_obs.a11y,
        steps=tuple(steps),
        source_level=SourceLevel.L3_TASK,
        format="a11y",
        meta={"seed": seed.task, "abstract": abstract, "concrete": concrete,
              "verdict": verdict.value, "url": initial_obs.url,
              "source": seed.url, "attempt": attempt, "terminal": terminal},
    )


def synthesize_batch(seeds: Sequence[SynthSeed], env_factory: Callable,
                     gateway: GatewayHandle, judge: GatewayHandle,
                     config: Optional[SynthConfig] = None) -> tuple:
    """Abstract each seed, explore under it, instantiate a concrete task,
    re-execute, and keep only judged successes. Returns (accepted, report)."""
    config = config or SynthConfig()
    accepted = []
    report = YieldReport()
    for seed in seeds:
        if not seed.task.strip():
            raise ValueError("seed task is empty")
        report.attempts += config.fanout
        env = env_factory()
        try:
            initial = env.reset(seed.url)
        except EnvError as err:
            report.errored += config.fanout
            report.notes.append((seed.task, "reset", str(err)))
            continue
        try:
            abstract = abstract_goal(seed.task, initial.a11y, gateway)
        except GatewayError as err:
            report.errored += config.fanout
            report.notes.append((seed.task, "abstract", str(err)))
            continue
        for attempt in range(config.fanout):
            outcome = _attempt(seed, abstract, env, gateway, judge, config,
                               attempt, report)
            if outcome is not None:
                accepted.append(outcome)
    return accepted, report
