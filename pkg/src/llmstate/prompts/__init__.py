"""Builders for the three role prompts.

Every prompt is a single user message assembled from plain-text templates
with named slots; the fixed text is pinned byte-for-byte by golden fixtures
(see ``prompts/fixtures``).  The system message is empty by default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence

from ..staterep import StateMode


@dataclass
class PromptBundle:
    role: str  # "attention" | "estimator" | "policy"
    rendered_text: str
    slots: dict[str, str] = field(default_factory=dict)


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return (resources.files(__package__) / "templates" / name).read_text(
        encoding="utf-8"
    )


def fixture_text(name: str) -> str:
    """Load a golden prompt fixture bundled with the package."""
    return (resources.files(__package__) / "fixtures" / name).read_text(
        encoding="utf-8"
    )


def render_history_block(history_records: Sequence[str]) -> str:
    """The history slot is the list-literal of rendered action records."""
    return repr(list(history_records))


def build_attention_prompt(
    state_text: str, observation: str, instruction: str
) -> PromptBundle:
    """Prompt asking the model to add task-relevant objects to the state."""
    slots = {
        "state": state_text,
        "observation": observation,
        "instruction": instruction,
    }
    return PromptBundle("attention", _template("attention.txt").format(**slots), slots)


def build_estimator_prompt(
    state_text: str, history_records: Sequence[str], observation_tail: str
) -> PromptBundle:
    """Prompt asking the model to re-estimate object attributes and summary.

    ``history_records`` must be the full history from step 0, already
    rendered via ``dsl.render_action_record``.
    """
    slots = {
        "state": state_text,
        "history": render_history_block(history_records),
        "observation_tail": observation_tail,
    }
    return PromptBundle("estimator", _template("estimator.txt").format(**slots), slots)


def build_policy_prompt(
    instruction: str,
    history_records: Sequence[str],
    observation: str,
    state_text: str,
    step_budget: int,
    mode: StateMode = StateMode.FULL,
) -> PromptBundle:
    """Prompt asking the model for a numbered low-level action plan.

    In NO_STATES mode the current-state section is omitted entirely and the
    model plans from raw history and observation alone.
    """
    if step_budget < 1:
        raise ValueError("step_budget must be >= 1")
    if mode == StateMode.NO_STATES:
        state_section = ""
    else:
        state_section = _template("policy_state_section.txt").format(state=state_text)
    slots = {
        "instruction": instruction,
        "history": render_history_block(history_records),
        "observation": observation,
        "state_section": state_section,
        "step_budget": str(step_budget),
    }
    return PromptBundle("policy", _template("policy.txt").format(**slots), slots)
