"""Two-stage corpus filtering: rule-based URL screening plus LLM scoring,
and rule-only trajectory pruning.

The trajectory stage never talks to a gateway — it prunes stationary
transitions, enforces the 30k-token/30-turn caps, and applies the blocklist.
"""

from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence, Union

from .a11y import A11yError, diff_trees, parse_a11y_text, serialize_a11y_text
from .gateway import GatewayError, GatewayHandle, ParseError, extract_first_json
from .prompts import load_template, fill
from .resources import load_blocklist
from .trajectory import Trajectory, estimate_tokens

TOKEN_CAP = 30000
TURN_CAP = 30

REASON_UNREACHABLE = "UNREACHABLE"
REASON_KEYWORD = "KEYWORD"
REASON_UNPARSEABLE = "UNPARSEABLE"
REASON_SAFETY = "SAFETY"
REASON_BELOW_MEAN = "BELOW_MEAN"
REASON_TURNS = "TURNS"
REASON_TOKENS = "TOKENS"
REASON_BLOCKLIST = "BLOCKLIST"


@dataclass(frozen=True, slots=True)
class Rejection:
    reason: str
    detail: str = ""


@dataclass(frozen=True, slots=True)
class FilteredTrajectory:
    trajectory: Trajectory
    pruned_steps: int = 0


@dataclass(frozen=True, slots=True)
class UrlScore:
    accessibility: float
    content_suitability: float
    interactivity: float
    engineering_quality: float
    safety_violation: bool = False

    def __post_init__(self):
        for name in ("accessibility", "content_suitability",
                     "interactivity", "engineering_quality"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ValueError(f"{name} must be a number, got {value!r}")
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} out of [0,1]: {value}")

    @property
    def composite(self) -> float:
        return (self.accessibility + self.content_suitability
                + self.interactivity + self.engineering_quality) / 4.0


@dataclass
class FilterReport:
    inputs: int = 0
    survivors: int = 0
    stage_survivors: dict = None
    reasons: dict = None
    deferred: list = None  # (url, error) pairs to retry, never silently dropped

    def __post_init__(self):
        if self.stage_survivors is None:
            self.stage_survivors = {}
        if self.reasons is None:
            self.reasons = {}
        if self.deferred is None:
            self.deferred = []

    def reject(self, reason: str) -> None:
        self.reasons[reason] = self.reasons.get(reason, 0) + 1

    def to_obj(self) -> dict:
        return {"inputs": self.inputs, "survivors": self.survivors,
                "stage_survivors": self.stage_survivors, "reasons": self.reasons,
                "deferred": self.deferred}


# --- stage 1: URL rules -----------------------------------------------------------------

def blocklist_hit(text: str, blocklist: Sequence[str]) -> Optional[str]:
    folded = text.casefold()
    for term in blocklist:
        if term.casefold() in folded:
            return term
    return None


Probe = Callable[[str], Optional[str]]  # url -> page title, or None if unreachable


def filter_urls_rules(urls: Sequence[str], probe: Probe,
                      blocklist: Optional[Sequence[str]] = None,
                      ) -> tuple[list, FilterReport]:
    if blocklist is None:
        blocklist = load_blocklist()
    if not blocklist:
        raise ValueError("blocklist must be nonempty")
    report = FilterReport(inputs=len(urls))
    reachable = []
    for url in urls:
        try:
            title = probe(url)
        except Exception:  # timeouts and transport hiccups mean unreachable
            title = None
        if title is None:
            report.reject(REASON_UNREACHABLE)
            continue
        reachable.append((url, title))
    report.stage_survivors["reachable"] = len(reachable)
    survivors = []
    for url, title in reachable:
        term = blocklist_hit(f"{url} {title}", blocklist)
        if term is not None:
            report.reject(REASON_KEYWORD)
            continue
        survivors.append(url)
    report.stage_survivors["keyword"] = len(survivors)
    report.survivors = len(survivors)
    return survivors, report


# --- stage 2: LLM scoring ---------------------------------------------------------------

_SCORE_KEYS = ("accessibility", "content_suitability", "interactivity",
               "engineering_quality")


def _parse_score(completion: str) -> UrlScore:
    obj = extract_first_json(completion)
    missing = [k for k in _SCORE_KEYS if k not in obj]
    if missing:
        raise ParseError(f"score object missing {missing}")
    return UrlScore(
        accessibility=obj["accessibility"],
        content_suitability=obj["content_suitability"],
        interactivity=obj["interactivity"],
        engineering_quality=obj["engineering_quality"],
        safety_violation=bool(obj.get("safety_violation", False)),
    )


def score_url_llm(url: str, page_text: str,
                  gateway: GatewayHandle) -> Union[UrlScore, Rejection]:
    """One judge call (plus one retry on malformed output) per site."""
    prompt = fill(load_template("url_score"), url=url, observation=page_text)
    messages = [{"role": "user", "content": prompt}]
    last_error = ""
    for _ in range(2):
        completion = gateway.complete(messages)
        try:
            return _parse_score(completion)
        except (ParseError, ValueError) as exc:
            last_error = str(exc)
    return Rejection(REASON_UNPARSEABLE, last_error)


def threshold_urls(scored: Sequence[tuple]) -> list:
    """Survivors of one batch: composite at or above the batch mean, no
    safety violation. The mean is over every score in the invocation."""
    if not scored:
        return []
    mean = sum(score.composite for _, score in scored) / len(scored)
    return [url for url, score in scored
            if not score.safety_violation and score.composite >= mean]


def filter_urls_llm(pages: Sequence[tuple], gateway: GatewayHandle,
                    ) -> tuple[list, FilterReport]:
    """Score (url, page_text) pairs, then apply the batch-mean threshold.

    Gateway failures defer the site: it is excluded from the batch mean and
    reported under "deferred" rather than silently dropped.
    """
    report = FilterReport(inputs=len(pages))
    scored = []
    deferred = []
    for url, page_text in pages:
        try:
            outcome = score_url_llm(url, page_text, gateway)
        except GatewayError as exc:
            deferred.append((url, str(exc)))
            continue
        if isinstance(outcome, Rejection):
            report.reject(outcome.reason)
            continue
        scored.append((url, outcome))
    report.stage_survivors["scored"] = len(scored)
    report.stage_survivors["deferred"] = len(deferred)
    kept = set(threshold_urls(scored))
    survivors = []
    for url, score in scored:
        if url in kept:
            survivors.append(url)
        elif score.safety_violation:
            report.reject(REASON_SAFETY)
        else:
            report.reject(REASON_BELOW_MEAN)
    report.stage_survivors["threshold"] = len(survivors)
    report.survivors = len(survivors)
    report.deferred.extend(deferred)
    return survivors, report


# --- trajectory stage (rule-only) ---------------------------------------------------------

def _stationary(state: str, next_state: str, fmt: str) -> bool:
    if state == next_state:
        return True
    if fmt != "a11y":
        return False
    try:
        before = parse_a11y_text(state)
        after = parse_a11y_text(next_state)
    except (ValueError, A11yError):
        return False
    return diff_trees(before, after).is_empty()


def prune_stationary_steps(traj: Trajectory) -> tuple[Trajectory, int]:
    """Drop transitions whose action changed nothing, re-splicing the chain."""
    kept = [s for s in traj.steps if not _stationary(s.state, s.next_state, traj.format)]
    pruned = len(traj.steps) - len(kept)
    if pruned == 0:
        return traj, 0
    respliced = []
    current = traj.initial_state
    for step in kept:
        respliced.append(replace(step, state=current))
        current = step.next_state
    return replace(traj, steps=tuple(respliced)), pruned


def filter_trajectory(traj: Trajectory,
                      blocklist: Optional[Sequence[str]] = None,
                      token_cap: int = TOKEN_CAP,
                      turn_cap: int = TURN_CAP,
                      ) -> Union[FilteredTrajectory, Rejection]:
    """Rule-only trajectory screening; performs zero gateway calls."""
    if blocklist is None:
        blocklist = load_blocklist()
    pruned_traj, pruned = prune_stationary_steps(traj)
    if pruned_traj.turns > turn_cap:
        return Rejection(REASON_TURNS, f"{pruned_traj.turns} > {turn_cap}")
    tokens = estimate_tokens(pruned_traj)
    if tokens > token_cap:
        return Rejection(REASON_TOKENS, f"{tokens} > {token_cap}")
    scan = [str(pruned_traj.meta.get("url", "")), pruned_traj.instruction.text,
            pruned_traj.initial_state]
    scan.extend(s.next_state for s in pruned_traj.steps)
    term = blocklist_hit("\n".join(scan), blocklist)
    if term is not None:
        return Rejection(REASON_BLOCKLIST, term)
    return FilteredTrajectory(pruned_traj, pruned)


def filter_trajectories(trajs: Iterable[Trajectory],
                        blocklist: Optional[Sequence[str]] = None,
                        token_cap: int = TOKEN_CAP,
                        turn_cap: int = TURN_CAP,
                        ) -> tuple[list, FilterReport]:
    trajs = list(trajs)
    if blocklist is None:
        blocklist = load_blocklist()
    report = FilterReport(inputs=len(trajs))
    survivors = []
    pruned_total = 0
    for traj in trajs:
        outcome = filter_trajectory(traj, blocklist, token_cap, turn_cap)
        if isinstance(outcome, Rejection):
            report.reject(outcome.reason)
            continue
        survivors.append(outcome.trajectory)
        pruned_total += outcome.pruned_steps
    report.survivors = len(survivors)
    report.stage_survivors["kept"] = len(survivors)
    report.stage_survivors["pruned_steps"] = pruned_total
    return survivors, report
