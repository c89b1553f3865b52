"""The belief-state store maintained across an episode.

The state is an insertion-ordered map from object names to attribute lists
(the structured half) plus a free-text retrospective summary (the
unstructured half).  The key set only ever grows; attribute lists are
replaced wholesale on update, and the summary is replaced each estimation
round because estimation always reruns over the full history.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .dsl import AddRelatedObjects, Directive, UpdateReasoning, UpdateState


class StateMode(str, Enum):
    """Which parts of the state the policy prompt gets to see."""

    FULL = "full"
    NO_SUMMARY = "no_summary"
    NO_OBJECTS = "no_objects"
    NO_STATES = "no_states"


# Two blank lines sit between the object entries and the reasoning block;
# the golden prompt transcripts pin this exact layout.
_SUMMARY_SEP = "\n\n\n"


@dataclass
class LLMState:
    """Ordered object->attributes entries plus a retrospective summary."""

    attributes: dict[str, list[str]] = field(default_factory=dict)
    summary: str = ""

    @property
    def key_objects(self) -> list[str]:
        return list(self.attributes)

    def copy(self) -> "LLMState":
        return LLMState(
            attributes={k: list(v) for k, v in self.attributes.items()},
            summary=self.summary,
        )


def register_key_objects(state: LLMState, names: Iterable[str]) -> LLMState:
    """Append new key objects with empty attribute lists; re-adds are no-ops."""
    new = state.copy()
    for name in names:
        if name and name not in new.attributes:
            new.attributes[name] = []
    return new


def apply_estimation(state: LLMState, directives: Sequence[Directive]) -> LLMState:
    """Fold estimation directives into the state.

    ``UpdateState`` replaces that object's attribute list (registering the
    name if it is new); ``UpdateReasoning`` replaces the summary wholesale.
    Later directives for the same object win.
    """
    new = state.copy()
    for directive in directives:
        if isinstance(directive, UpdateState):
            new.attributes[directive.name] = list(directive.attributes)
        elif isinstance(directive, UpdateReasoning):
            new.summary = directive.text
        elif isinstance(directive, AddRelatedObjects):
            new.attributes.setdefault(directive.name, [])
    return new


def render_state(state: LLMState, mode: StateMode = StateMode.FULL) -> str:
    """Render the ``current state`` prompt block for the given ablation mode."""
    lines = [
        f"{name}: {' | '.join(attrs)}" if attrs else f"{name}: []"
        for name, attrs in state.attributes.items()
    ]
    entries = "\n".join(lines)
    reasoning = f"Reasoning: {state.summary}" if state.summary else ""

    if mode == StateMode.NO_STATES:
        return ""
    if mode == StateMode.NO_SUMMARY:
        return entries
    if mode == StateMode.NO_OBJECTS:
        return reasoning
    if entries and reasoning:
        return entries + _SUMMARY_SEP + reasoning
    return entries or reasoning


def parse_state_block(text: str) -> LLMState:
    """Inverse of render_state(FULL), used when reloading trace snapshots."""
    state = LLMState()
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if line.startswith("Reasoning: "):
            state.summary = "\n".join([line[len("Reasoning: "):]] + lines[i + 1:])
            break
        if not line.strip():
            continue
        name, _, raw = line.partition(": ")
        state.attributes[name] = [] if raw == "[]" else [
            part.strip() for part in raw.split("|") if part.strip()
        ]
    return state
