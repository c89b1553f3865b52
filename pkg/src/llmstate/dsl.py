"""Parsing and rendering for the planner's code-style command language.

The language has two halves: belief-update directives emitted by the
attention and estimation roles (``add_related_objects``, ``update_state``,
``update_reasoning``, plus the ``add_attribute`` / ``generate_summary``
aliases) and numbered low-level action plans emitted by the policy role.

Parsing is line oriented and never raises on malformed input: lines that do
not match the grammar are silently skipped, so a garbled model response
yields fewer commands rather than an error.  See ``docs/dsl_grammar.md`` for
the grammar in EBNF.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

#: Number of arguments each primitive action takes.
ACTION_ARITY: dict[str, int] = {
    "move": 1,
    "pickup": 1,
    "placein": 2,
    "placeon": 2,
    "open": 1,
    "close": 1,
    "switchon": 1,
    "switchoff": 1,
    "wait": 0,
}


@dataclass(frozen=True)
class PrimitiveAction:
    """One of the nine fixed action kinds with open object arguments."""

    kind: str
    args: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        arity = ACTION_ARITY.get(self.kind)
        if arity is None:
            raise ValueError(f"unknown action kind: {self.kind!r}")
        if len(self.args) != arity:
            raise ValueError(
                f"{self.kind} takes {arity} argument(s), got {len(self.args)}"
            )
        if any(not a for a in self.args):
            raise ValueError(f"{self.kind} has an empty argument")

    def render(self) -> str:
        return f"{self.kind}({', '.join(self.args)})"


@dataclass(frozen=True)
class AddRelatedObjects:
    name: str


@dataclass(frozen=True)
class UpdateState:
    name: str
    attributes: tuple[str, ...]


@dataclass(frozen=True)
class UpdateReasoning:
    text: str


Directive = Union[AddRelatedObjects, UpdateState, UpdateReasoning]


@dataclass(frozen=True)
class ActionRecord:
    """An executed action paired with its binary outcome."""

    action: PrimitiveAction
    success: bool


# Directive arguments must be quoted (either quote style); plan arguments may
# be bare tokens.  No escaping and no multi-line arguments.
_ADD_RE = re.compile(r"""^\s*add_related_objects\(\s*(['"])(.*?)\1\s*\)\s*$""")
_STATE_RE = re.compile(
    r"""^\s*(?:update_state|add_attribute)\(\s*(['"])(.*?)\1\s*,\s*(['"])(.*?)\3\s*\)\s*$"""
)
_REASON_RE = re.compile(
    r"""^\s*(?:update_reasoning|generate_summary)\(\s*(['"])(.*?)\1\s*\)\s*$"""
)
_PLAN_RE = re.compile(r"""^\s*\d+[.)]\s*([A-Za-z_]\w*)\s*\(([^()]*)\)\s*(.*)$""")
_TOKEN_RE = re.compile(r"^[A-Za-z0-9_]+$")


def split_attributes(raw: str) -> tuple[str, ...]:
    """Split a pipe-separated attribute string, trimming and dropping empties."""
    return tuple(part.strip() for part in raw.split("|") if part.strip())


def parse_directives(text: str) -> tuple[list[Directive], int]:
    """Extract belief-update directives from a model response.

    Returns the directives in source order together with the number of
    non-blank lines that were skipped (for telemetry).
    """
    directives: list[Directive] = []
    skipped = 0
    for line in text.splitlines():
        if not line.strip():
            continue
        m = _ADD_RE.match(line)
        if m and m.group(2).strip():
            directives.append(AddRelatedObjects(m.group(2).strip()))
            continue
        m = _STATE_RE.match(line)
        if m and m.group(2).strip():
            directives.append(
                UpdateState(m.group(2).strip(), split_attributes(m.group(4)))
            )
            continue
        m = _REASON_RE.match(line)
        if m:
            directives.append(UpdateReasoning(m.group(2)))
            continue
        skipped += 1
    return directives, skipped


def _clean_arg(raw: str) -> str:
    arg = raw.strip()
    if len(arg) >= 2 and arg[0] == arg[-1] and arg[0] in "'\"":
        arg = arg[1:-1].strip()
    return arg


def parse_plan(text: str) -> list[PrimitiveAction]:
    """Extract a numbered action plan from a model response.

    Recognizes lines shaped like ``N. kind(arg, ...)``; a trailing
    parenthetical comment is stripped.  Unknown kinds, wrong arity, and
    unparseable lines are discarded.  The ``Low-level Action Plan:`` header,
    when present, is simply an unnumbered line and falls through.
    """
    actions: list[PrimitiveAction] = []
    for line in text.splitlines():
        m = _PLAN_RE.match(line)
        if not m:
            continue
        kind, raw_args, trailing = m.group(1), m.group(2), m.group(3).strip()
        if trailing and not trailing.startswith("("):
            continue
        if kind not in ACTION_ARITY:
            continue
        args = [_clean_arg(a) for a in raw_args.split(",")] if raw_args.strip() else []
        args = [a for a in args if a]
        if len(args) != ACTION_ARITY[kind]:
            continue
        if any(not _TOKEN_RE.match(a) for a in args):
            continue
        actions.append(PrimitiveAction(kind, tuple(args)))
    return actions


def render_action_record(record: ActionRecord) -> str:
    """Render a record exactly as it appears in prompt history sections."""
    parts = (record.action.kind,) + record.action.args
    inner = ", ".join(f"'{p}'" for p in parts)
    status = "Success" if record.success else "Fail"
    return f"[{inner}]({status})"


def render_history(records: Sequence[ActionRecord]) -> str:
    """Render the full history block, ``[]`` when empty."""
    return repr([render_action_record(r) for r in records])


def render_plan(actions: Iterable[PrimitiveAction]) -> str:
    """Render actions as the numbered lines that parse_plan accepts."""
    return "\n".join(f"{i}. {a.render()}" for i, a in enumerate(actions, start=1))
