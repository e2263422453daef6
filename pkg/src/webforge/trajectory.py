"""Trajectory data model, JSONL persistence, and token accounting.

A trajectory is an instruction plus a chained sequence of (state, action,
next_state) transitions, all sharing one state representation format.
``initial_state`` carries the starting page even when there are no steps yet.
"""

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

from .a11y import A11yTree, serialize_a11y_text
from .actions import Action, ActionError, render_action, parse_action
from .transpile import TargetFormat

A11Y_FORMAT = "a11y"
STATE_FORMATS = (A11Y_FORMAT,) + tuple(f.value for f in TargetFormat)


class SchemaError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class FormatMismatch(ValueError):
    pass


IoError = OSError  # documented alias; file I/O raises the builtin


class Origin(Enum):
    SELF_PROPOSED = "SELF_PROPOSED"
    SYNTHESIZED_SEED = "SYNTHESIZED_SEED"
    ABSTRACT = "ABSTRACT"
    CONCRETE = "CONCRETE"
    NONE = "NONE"


class SourceLevel(Enum):
    L1_RANDOM = "L1_RANDOM"
    L2_AUTONOMOUS = "L2_AUTONOMOUS"
    L3_TASK = "L3_TASK"
    EXTERNAL = "EXTERNAL"


@dataclass(frozen=True, slots=True)
class Instruction:
    text: str
    origin: Origin = Origin.NONE

    def __post_init__(self):
        if not isinstance(self.origin, Origin):
            raise ValueError(f"origin must be an Origin, got {self.origin!r}")
        if self.origin is not Origin.NONE and not self.text:
            raise ValueError(f"instruction text required for origin {self.origin.value}")


@dataclass(frozen=True, slots=True)
class Transition:
    state: str
    action: Action
    next_state: str

    def __post_init__(self):
        if not isinstance(self.action, Action):
            raise ValueError(f"action must be an Action, got {self.action!r}")


@dataclass(frozen=True, slots=True)
class Trajectory:
    instruction: Instruction
    initial_state: str
    steps: tuple[Transition, ...] = ()
    source_level: SourceLevel = SourceLevel.EXTERNAL
    format: str = A11Y_FORMAT
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.format not in STATE_FORMATS:
            raise ValueError(f"unknown state format {self.format!r}")
        if not isinstance(self.steps, tuple):
            object.__setattr__(self, "steps", tuple(self.steps))
        if self.steps and self.steps[0].state != self.initial_state:
            raise ValueError("steps[0].state must equal initial_state")
        for i in range(len(self.steps) - 1):
            if self.steps[i].next_state != self.steps[i + 1].state:
                raise ValueError(f"chaining broken between steps {i} and {i + 1}")

    @property
    def turns(self) -> int:
        return len(self.steps)

    def final_state(self) -> str:
        return self.steps[-1].next_state if self.steps else self.initial_state


StateLike = Union[str, A11yTree]


def _state_text(state: StateLike, traj_format: str) -> str:
    if isinstance(state, A11yTree):
        if traj_format != A11Y_FORMAT:
            raise FormatMismatch(f"tree state offered to a {traj_format!r} trajectory")
        return serialize_a11y_text(state)
    return state


def append_step(traj: Trajectory, action: Action, next_state: StateLike,
                fmt: Optional[str] = None) -> Trajectory:
    if fmt is not None and fmt != traj.format:
        raise FormatMismatch(f"step format {fmt!r} != trajectory format {traj.format!r}")
    step = Transition(
        state=traj.final_state(),
        action=action,
        next_state=_state_text(next_state, traj.format),
    )
    return replace(traj, steps=traj.steps + (step,))


def to_transitions(traj: Trajectory) -> list[tuple[Instruction, tuple[Transition, ...], Transition]]:
    return [(traj.instruction, traj.steps[:i], traj.steps[i]) for i in range(len(traj.steps))]


def estimate_tokens(traj: Trajectory,
                    estimator: Optional[Callable[[str], int]] = None) -> int:
    """Crude size proxy: one token per 4 UTF-8 bytes unless told otherwise.

    Interior states are shared between adjacent transitions, so only the
    initial state plus each step's action and next_state are counted.
    """
    texts = [traj.initial_state]
    for step in traj.steps:
        texts.append(render_action(step.action))
        texts.append(step.next_state)
    if estimator is not None:
        return sum(estimator(t) for t in texts)
    return math.ceil(sum(len(t.encode("utf-8")) for t in texts) / 4)


# --- JSONL persistence ----------------------------------------------------------------

def _traj_to_obj(traj: Trajectory) -> dict:
    return {
        "instruction": {"text": traj.instruction.text, "origin": traj.instruction.origin.value},
        "source_level": traj.source_level.value,
        "format": traj.format,
        "initial_state": traj.initial_state,
        "steps": [
            {"state": s.state, "action": render_action(s.action), "next_state": s.next_state}
            for s in traj.steps
        ],
        "meta": traj.meta,
    }


def _obj_to_traj(obj: dict, line: int) -> Trajectory:
    if not isinstance(obj, dict):
        raise SchemaError("trajectory record must be a JSON object", line)
    try:
        instr_obj = obj["instruction"]
        instruction = Instruction(
            text=instr_obj["text"], origin=Origin(instr_obj["origin"])
        )
        steps = tuple(
            Transition(
                state=s["state"],
                action=parse_action(s["action"]),
                next_state=s["next_state"],
            )
            for s in obj["steps"]
        )
        return Trajectory(
            instruction=instruction,
            initial_state=obj["initial_state"],
            steps=steps,
            source_level=SourceLevel(obj["source_level"]),
            format=obj["format"],
            meta=obj.get("meta", {}),
        )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError, ActionError) as exc:
        raise SchemaError(str(exc), line) from exc


def write_jsonl(trajs: Iterable[Trajectory], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for traj in trajs:
            fh.write(json.dumps(_traj_to_obj(traj), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_jsonl(path: Union[str, Path]) -> list[Trajectory]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                raise SchemaError("blank line", lineno)
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"bad JSON: {exc.msg}", lineno) from exc
            out.append(_obj_to_traj(obj, lineno))
    return out


# --- statistics ----------------------------------------------------------------------

def corpus_stats(trajs: list[Trajectory]) -> dict:
    """Turn/token histograms plus summary numbers, for reports and the CLI."""
    turn_hist: dict[int, int] = {}
    token_hist: dict[int, int] = {}
    tokens = []
    for traj in trajs:
        turn_hist[traj.turns] = turn_hist.get(traj.turns, 0) + 1
        n = estimate_tokens(traj)
        tokens.append(n)
        bucket = (n // 1000) * 1000
        token_hist[bucket] = token_hist.get(bucket, 0) + 1
    count = len(trajs)
    turns = [t.turns for t in trajs]
    return {
        "count": count,
        "turns": {
            "min": min(turns) if turns else 0,
            "max": max(turns) if turns else 0,
            "mean": sum(turns) / count if count else 0.0,
        },
        "tokens": {
            "min": min(tokens) if tokens else 0,
            "max": max(tokens) if tokens else 0,
            "mean": sum(tokens) / count if count else 0.0,
        },
        "turn_hist": dict(sorted(turn_hist.items())),
        "token_hist": dict(sorted(token_hist.items())),
    }
