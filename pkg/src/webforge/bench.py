"""Action-effect benchmark: case construction, dual judging, aggregation."""

import json
import math
import random
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .a11y import A11yError, A11yTree, diff_trees, parse_a11y_text
from .actions import parse_action, render_action
from .gateway import GatewayError, GatewayHandle, extract_first_json
from .prompts import fill, load_template
from .search import EmptyCompletion, simulate
from .trajectory import SchemaError, Trajectory
from .transpile import TargetFormat, describe_change, transpile


class Dimension(Enum):
    BASE_SEMANTICS = "base_semantics"
    FINE_GRAINED = "fine_grained"
    LONG_HORIZON = "long_horizon"
    MULTI_TAB = "multi_tab"
    FMT_XML = "fmt_xml"
    FMT_HTML = "fmt_html"
    FMT_MARKDOWN = "fmt_md"
    FMT_LOCATOR = "fmt_locator"
    WEB2NAL = "web2nal"


RUBRIC = (0.0, 0.4, 0.7, 1.0)
SNAP_MAX = 0.15
# a probe counts as long-horizon only with strictly more than 10 prior turns
LONG_HORIZON_MIN_PREFIX = 11
FINE_GRAINED_MAX_CHANGES = 3

_FMT_TARGETS = {
    Dimension.FMT_XML: TargetFormat.XML,
    Dimension.FMT_HTML: TargetFormat.HTML,
    Dimension.FMT_MARKDOWN: TargetFormat.MARKDOWN,
    Dimension.FMT_LOCATOR: TargetFormat.LOCATOR_SCRIPT,
}

# special dimensions first, then ordinary transitions cycle through the
# base dimension and its derived-format variants
_ROTATION = (Dimension.BASE_SEMANTICS, Dimension.FMT_XML, Dimension.FMT_HTML,
             Dimension.FMT_MARKDOWN, Dimension.FMT_LOCATOR, Dimension.WEB2NAL)


def _expected_fmt(dimension: Dimension) -> str:
    if dimension in _FMT_TARGETS:
        return _FMT_TARGETS[dimension].value
    if dimension is Dimension.WEB2NAL:
        return "nl"
    return "a11y"


@dataclass(frozen=True, slots=True)
class BenchCase:
    case_id: str
    dimension: Dimension
    initial_state: str
    steps: tuple  # ((rendered action, resulting state), ...) before the probe
    action: str  # rendered probe action
    ground_truth_next: str
    fmt: str = "a11y"

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(tuple(s) for s in self.steps))
        if (self.dimension is Dimension.LONG_HORIZON
                and len(self.steps) < LONG_HORIZON_MIN_PREFIX):
            raise ValueError("long-horizon cases need more than 10 prior turns")
        expected = _expected_fmt(self.dimension)
        if self.fmt != expected:
            raise ValueError(
                f"dimension {self.dimension.value} requires format {expected!r}")

    @property
    def current_state(self) -> str:
        return self.steps[-1][1] if self.steps else self.initial_state


@dataclass(frozen=True, slots=True)
class FactualityVerdict:
    score: float
    reasoning: str
    snapped: bool = False

    def __post_init__(self):
        if self.score not in RUBRIC:
            raise ValueError(f"score {self.score} outside rubric {RUBRIC}")


@dataclass(frozen=True, slots=True)
class TuringVerdict:
    choice: str
    model_slot: str
    model_chosen: bool
    reasoning: str

    def __post_init__(self):
        if self.choice not in ("A", "B") or self.model_slot not in ("A", "B"):
            raise ValueError("choice and model_slot must be 'A' or 'B'")
        if self.model_chosen != (self.choice == self.model_slot):
            raise ValueError("model_chosen must equal (choice == model_slot)")


@dataclass(frozen=True, slots=True)
class CaseResult:
    case: BenchCase
    prediction: Optional[str]
    factuality: Optional[FactualityVerdict]
    turing: Optional[TuringVerdict]
    errors: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "errors", tuple(self.errors))


def snap_score(raw: float):
    """Nearest rubric value within the snap window; None when too far off."""
    best = min(RUBRIC, key=lambda r: (abs(r - raw), r))
    if abs(best - raw) > SNAP_MAX:
        return None
    return best, best != raw


def render_trajectory_str(initial_state: str, steps: Sequence) -> str:
    parts = [f"Initial Page State: {initial_state}"]
    for action, state in steps:
        parts.append(f"Action: '{action}'")
        parts.append(f"Next Page State: {state}")
    return "\n".join(parts)


def eval_factuality(case: BenchCase, prediction: str,
                    judge: GatewayHandle) -> Optional[FactualityVerdict]:
    prompt = fill(
        load_template("factuality"),
        trajectory_str=render_trajectory_str(case.initial_state, case.steps),
        action=case.action,
        predicted=prediction,
        ground_truth=case.ground_truth_next,
    )
    for _attempt in range(2):
        completion = judge.complete([{"role": "user", "content": prompt}])
        try:
            obj = extract_first_json(completion)
            raw = obj["action_effect_accuracy_score"]
            if isinstance(raw, bool):
                raise ValueError("boolean is not a score")
            value = float(raw)
        except (KeyError, TypeError, ValueError):
            continue
        snapped = snap_score(value)
        if snapped is None:
            return None  # the judge answered; the answer is just off-rubric
        score, was_snapped = snapped
        return FactualityVerdict(score=score, reasoning=str(obj.get("reasoning", "")),
                                 snapped=was_snapped)
    return None


def eval_turing(case: BenchCase, prediction: str, judge: GatewayHandle,
                rng_seed) -> Optional[TuringVerdict]:
    rng = random.Random(f"{rng_seed}:{case.case_id}")
    model_slot = "A" if rng.random() < 0.5 else "B"
    option_a = prediction if model_slot == "A" else case.ground_truth_next
    option_b = prediction if model_slot == "B" else case.ground_truth_next
    prompt = fill(
        load_template("turing"),
        trajectory_str=render_trajectory_str(case.initial_state, case.steps),
        action=case.action,
        option_A=option_a,
        option_B=option_b,
    )
    for _attempt in range(2):
        completion = judge.complete([{"role": "user", "content": prompt}])
        try:
            obj = extract_first_json(completion)
            choice = str(obj["choice"]).strip().upper()
        except (KeyError, TypeError, ValueError):
            continue
        if choice not in ("A", "B"):
            continue
        return TuringVerdict(choice=choice, model_slot=model_slot,
                             model_chosen=choice == model_slot,
                             reasoning=str(obj.get("reasoning", "")))
    return None


def aggregate(results: Sequence[CaseResult]) -> dict:
    report = {"total_cases": len(results), "dimensions": {},
              "overall": {"factuality": None, "turing": None}}
    grouped = {}
    for res in results:
        grouped.setdefault(res.case.dimension, []).append(res)
    fact_values, turing_values = [], []
    for dimension in Dimension:  # declaration order keeps the report stable
        rows = grouped.get(dimension)
        if not rows:
            continue  # an empty dimension is absent, never zero
        fact_scores = [r.factuality.score for r in rows if r.factuality is not None]
        turing_flags = [r.turing.model_chosen for r in rows if r.turing is not None]
        row = {
            "cases": len(rows),
            # fsum is exactly rounded, so case order cannot perturb the report
            "factuality": (100.0 * math.fsum(fact_scores) / len(fact_scores)
                           if fact_scores else None),
            "turing": (100.0 * math.fsum(turing_flags) / len(turing_flags)
                       if turing_flags else None),
            "excluded_factuality": sum(
                1 for r in rows if r.prediction is not None and r.factuality is None),
            "excluded_turing": sum(
                1 for r in rows if r.prediction is not None and r.turing is None),
            "errored": sum(1 for r in rows if r.prediction is None),
        }
        report["dimensions"][dimension.value] = row
        if row["factuality"] is not None:
            fact_values.append(row["factuality"])
        if row["turing"] is not None:
            turing_values.append(row["turing"])
    if fact_values:
        report["overall"]["factuality"] = math.fsum(fact_values) / len(fact_values)
    if turing_values:
        report["overall"]["turing"] = math.fsum(turing_values) / len(turing_values)
    return report


def kendall_tau(xs: Sequence, ys: Sequence) -> float:
    """Tau-b: pairs tied on both sides drop out of every count."""
    if len(xs) != len(ys):
        raise ValueError("rankings differ in length")
    if len(xs) < 2:
        raise ValueError("need at least two items to rank")
    concordant = discordant = ties_x = ties_y = 0
    for i in range(len(xs)):
        for j in range(i + 1, len(xs)):
            dx = (xs[i] > xs[j]) - (xs[i] < xs[j])
            dy = (ys[i] > ys[j]) - (ys[i] < ys[j])
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                ties_x += 1
            elif dy == 0:
                ties_y += 1
            elif dx == dy:
                concordant += 1
            else:
                discordant += 1
    denom = math.sqrt((concordant + discordant + ties_x)
                      * (concordant + discordant + ties_y))
    if denom == 0:
        raise ValueError("constant ranking has no defined correlation")
    return (concordant - discordant) / denom


def judge_consistency(scores: Mapping[str, Mapping[str, float]]) -> dict:
    """Rank agreement between judges over their shared systems."""
    judges = sorted(scores)
    if len(judges) < 2:
        raise ValueError("need at least two judges")
    common = set(scores[judges[0]])
    for judge in judges[1:]:
        common &= set(scores[judge])
    systems = sorted(common)
    if len(systems) < 3:
        raise ValueError("need at least three systems scored by every judge")
    out = {}
    for i in range(len(judges)):
        for j in range(i + 1, len(judges)):
            a, b = judges[i], judges[j]
            out[(a, b)] = kendall_tau([scores[a][s] for s in systems],
                                      [scores[b][s] for s in systems])
    return out


def _parse_or_none(text: str) -> Optional[A11yTree]:
    try:
        return parse_a11y_text(text)
    except A11yError:
        return None


def _change_count(before: A11yTree, after: A11yTree) -> int:
    changes = diff_trees(before, after)
    return len(changes.added) + len(changes.removed) + len(changes.modified)


def _variant_case(slot: Dimension, base: BenchCase, step, traj: Trajectory,
                  gateway: Optional[GatewayHandle]) -> BenchCase:
    """Derive a format/NL variant from a base transition; fall back to base."""
    stem = base.case_id.rsplit(".", 1)[0]
    if slot is Dimension.WEB2NAL:
        if gateway is None:
            return base
        before = _parse_or_none(step.state)
        after = _parse_or_none(step.next_state)
        if before is None or after is None:
            return base
        description = describe_change(before, step.action, after, gateway)
        return BenchCase(case_id=f"{stem}.{slot.value}", dimension=slot,
                         initial_state=base.initial_state, steps=base.steps,
                         action=base.action, ground_truth_next=description, fmt="nl")
    target = _FMT_TARGETS[slot]
    try:
        initial = transpile(parse_a11y_text(base.initial_state), target)
        steps = tuple((a, transpile(parse_a11y_text(s), target))
                      for a, s in base.steps)
        truth = transpile(parse_a11y_text(base.ground_truth_next), target)
    except A11yError:
        return base
    return BenchCase(case_id=f"{stem}.{slot.value}", dimension=slot,
                     initial_state=initial, steps=steps, action=base.action,
                     ground_truth_next=truth, fmt=target.value)


def build_bench(trajectories: Iterable[Trajectory],
                gateway: Optional[GatewayHandle] = None, rng_seed=0,
                fine_grained_threshold: int = FINE_GRAINED_MAX_CHANGES) -> list:
    cases = []
    rotation_clock = 0
    for ti, traj in enumerate(trajectories):
        if traj.format != "a11y":
            continue
        prefix = []
        for t, step in enumerate(traj.steps):
            rendered = render_action(step.action)
            before = _parse_or_none(step.state)
            after = _parse_or_none(step.next_state)
            dimension = None
            if (step.action.primitive.startswith("tab_")
                    or (before is not None and len(before.roots) > 1)
                    or (after is not None and len(after.roots) > 1)):
                dimension = Dimension.MULTI_TAB
            elif t >= LONG_HORIZON_MIN_PREFIX:
                dimension = Dimension.LONG_HORIZON
            elif (before is not None and after is not None
                  and _change_count(before, after) <= fine_grained_threshold):
                dimension = Dimension.FINE_GRAINED

            if dimension is not None:
                cases.append(BenchCase(
                    case_id=f"t{ti}.s{t}.{dimension.value}", dimension=dimension,
                    initial_state=traj.initial_state, steps=tuple(prefix),
                    action=rendered, ground_truth_next=step.next_state))
            else:
                base = BenchCase(
                    case_id=f"t{ti}.s{t}.{Dimension.BASE_SEMANTICS.value}",
                    dimension=Dimension.BASE_SEMANTICS,
                    initial_state=traj.initial_state, steps=tuple(prefix),
                    action=rendered, ground_truth_next=step.next_state)
                slot = _ROTATION[rotation_clock % len(_ROTATION)]
                rotation_clock += 1
                if slot is Dimension.BASE_SEMANTICS:
                    cases.append(base)
                else:
                    cases.append(_variant_case(slot, base, step, traj, gateway))
            prefix.append((rendered, step.next_state))
    rng = random.Random(rng_seed)
    rng.shuffle(cases)
    return cases


def run_bench(cases: Sequence[BenchCase], predictor: Callable[[BenchCase], str],
              judge: GatewayHandle, rng_seed=0) -> list:
    results = []
    for case in cases:
        try:
            prediction = predictor(case)
        except (GatewayError, EmptyCompletion) as err:
            results.append(CaseResult(case, None, None, None,
                                      (f"prediction failed: {err}",)))
            continue
        factuality = turing = None
        errors = []
        try:
            factuality = eval_factuality(case, prediction, judge)
        except GatewayError as err:
            errors.append(f"factuality judge unavailable: {err}")
        try:
            turing = eval_turing(case, prediction, judge, rng_seed)
        except GatewayError as err:
            errors.append(f"turing judge unavailable: {err}")
        results.append(CaseResult(case, prediction, factuality, turing,
                                  tuple(errors)))
    return results


def wm_predictor(gateway: GatewayHandle) -> Callable[[BenchCase], str]:
    """Standard next-state predictor speaking the simulation message protocol."""

    def predict(case: BenchCase) -> str:
        history = [case.initial_state]
        history.extend(tuple(pair) for pair in case.steps)
        return simulate(gateway, history, parse_action(case.action))

    return predict


def case_to_obj(case: BenchCase) -> dict:
    return {
        "case_id": case.case_id,
        "dimension": case.dimension.value,
        "format": case.fmt,
        "initial_state": case.initial_state,
        "steps": [[action, state] for action, state in case.steps],
        "action": case.action,
        "ground_truth_next": case.ground_truth_next,
    }


def case_from_obj(obj: dict) -> BenchCase:
    try:
        return BenchCase(
            case_id=obj["case_id"],
            dimension=Dimension(obj["dimension"]),
            initial_state=obj["initial_state"],
            steps=tuple((action, state) for action, state in obj["steps"]),
            action=obj["action"],
            ground_truth_next=obj["ground_truth_next"],
            fmt=obj.get("format", "a11y"),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise SchemaError(f"bad bench case: {err}") from err


def result_to_obj(result: CaseResult) -> dict:
    obj = {"case": case_to_obj(result.case), "prediction": result.prediction,
           "factuality": None, "turing": None, "errors": list(result.errors)}
    if result.factuality is not None:
        obj["factuality"] = {"score": result.factuality.score,
                             "reasoning": result.factuality.reasoning,
                             "snapped": result.factuality.snapped}
    if result.turing is not None:
        obj["turing"] = {"choice": result.turing.choice,
                         "model_slot": result.turing.model_slot,
                         "model_chosen": result.turing.model_chosen,
                         "reasoning": result.turing.reasoning}
    return obj


def result_from_obj(obj: dict) -> CaseResult:
    try:
        factuality = turing = None
        if obj["factuality"] is not None:
            factuality = FactualityVerdict(**obj["factuality"])
        if obj["turing"] is not None:
            turing = TuringVerdict(**obj["turing"])
        return CaseResult(case=case_from_obj(obj["case"]),
                          prediction=obj["prediction"], factuality=factuality,
                          turing=turing, errors=tuple(obj.get("errors", ())))
    except (KeyError, TypeError, ValueError) as err:
        raise SchemaError(f"bad bench result: {err}") from err


def write_cases(cases: Iterable[BenchCase], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for case in cases:
            fh.write(json.dumps(case_to_obj(case), ensure_ascii=False) + "\n")


def read_cases(path) -> list:
    cases = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise SchemaError(f"bad JSON: {err}", lineno) from err
            try:
                cases.append(case_from_obj(obj))
            except SchemaError as err:
                raise SchemaError(str(err), lineno) from err
    return cases


def write_results(results: Iterable[CaseResult], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(result_to_obj(result), ensure_ascii=False) + "\n")


def read_results(path) -> list:
    results = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise SchemaError(f"bad JSON: {err}", lineno) from err
            try:
                results.append(result_from_obj(obj))
            except SchemaError as err:
                raise SchemaError(str(err), lineno) from err
    return results
