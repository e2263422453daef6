"""Prompt template loading and slot filling.

Templates are plain text files shipped under ``webforge/prompts``; slots
are literal ``{name}`` markers.  Filling is a single regex pass rather
than str.format because several templates contain literal JSON braces,
and slot values must never be rescanned for markers.
"""

import re
from pathlib import Path

_DIR = Path(__file__).parent / "prompts"

TEMPLATE_NAMES = (
    "wm_system",
    "wm_step",
    "actor",
    "judge_completion",
    "abstraction",
    "instantiation",
    "factuality",
    "turing",
    "l2_self_proposed",
    "l2_long_horizon",
    "l2_composite",
    "l2_curiosity",
    "url_score",
    "pairwise_value",
    "describe_change",
    "describe_change_diff",
    "task_seed",
    "task_variants",
    "task_paraphrase",
    "cot_rationale",
)

_SLOT_RE = re.compile(r"\{([A-Za-z_]+)\}")


class UnknownTemplate(KeyError):
    pass


class MissingSlot(KeyError):
    pass


def load_template(name: str, prompts_dir: Path | None = None) -> str:
    """Load a template by name; prompts_dir overrides shipped defaults."""
    if name not in TEMPLATE_NAMES:
        raise UnknownTemplate(name)
    if prompts_dir is not None:
        override = prompts_dir / f"{name}.txt"
        if override.exists():
            return override.read_text(encoding="utf-8")
    return (_DIR / f"{name}.txt").read_text(encoding="utf-8")


def template_slots(text: str) -> list[str]:
    seen = []
    for m in _SLOT_RE.finditer(text):
        if m.group(1) not in seen:
            seen.append(m.group(1))
    return seen


def fill(template: str, **slots) -> str:
    """Replace every {slot} marker in one pass; missing or extra slots error."""
    needed = template_slots(template)
    missing = [s for s in needed if s not in slots]
    if missing:
        raise MissingSlot(f"unfilled slots: {missing}")
    extra = [k for k in slots if k not in needed]
    if extra:
        raise MissingSlot(f"template has no slots: {extra}")
    return _SLOT_RE.sub(lambda m: str(slots[m.group(1)]), template)


def render(name: str, prompts_dir: Path | None = None, **slots) -> str:
    return fill(load_template(name, prompts_dir), **slots)
