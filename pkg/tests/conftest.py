from __future__ import annotations

import json
from pathlib import Path

import pytest

from llmstate.sim import WorldModel, load_world

TESTS_DIR = Path(__file__).parent
DATA_DIR = TESTS_DIR / "data"
PKG_DATA = TESTS_DIR.parent / "src" / "llmstate" / "data"


def golden(name: str) -> str:
    return (DATA_DIR / "golden" / name).read_text(encoding="utf-8")


def _obj(oid, cls, rel, parent, **kw):
    entry = {"id": oid, "class": cls, "placement": {"rel": rel, "parent": parent}}
    entry.update(kw)
    return entry


def kitchen_doc(hand_capacity: int = 2, needs_free_hand: bool = True) -> dict:
    """Compact kitchen/bedroom world exercising every action semantic."""
    return {
        "version": 1,
        "rooms": ["kitchen1", "bedroom1"],
        "robot": {
            "start_room": "kitchen1",
            "hand_capacity": hand_capacity,
            "interaction_needs_free_hand": needs_free_hand,
        },
        "objects": [
            _obj("kitchentable1", "kitchentable", "in", "kitchen1", surface=True),
            _obj("cutleryknife1", "cutleryknife", "on", "kitchentable1", graspable=True),
            _obj("plate1", "plate", "on", "kitchentable1", graspable=True, surface=True),
            _obj("mug1", "mug", "on", "kitchentable1", graspable=True),
            _obj("statue1", "statue", "on", "kitchentable1", in_object_list=True),
            _obj("kitchencabinet1", "kitchencabinet", "in", "kitchen1",
                 container=True, openable=True),
            _obj("kitchencounter1", "kitchencounter", "in", "kitchen1", surface=True),
            _obj("fridge1", "fridge", "in", "kitchen1", container=True, openable=True),
            _obj("milk1", "milk", "in", "fridge1", graspable=True,
                 latent={"temperature": "cold"}),
            _obj("spoon1", "spoon", "in", "fridge1", graspable=True),
            _obj("microwave1", "microwave", "on", "kitchencounter1",
                 container=True, openable=True, switchable=True),
            _obj("toaster1", "toaster", "on", "kitchencounter1",
                 container=True, switchable=True, capacity=1),
            _obj("breadslice1", "breadslice", "on", "kitchencounter1", graspable=True,
                 latent={"temperature": "ambient"}),
            _obj("breadslice2", "breadslice", "on", "kitchencounter1", graspable=True,
                 latent={"temperature": "ambient"}),
            _obj("lightswitch1", "lightswitch", "in", "kitchen1", switchable=True,
                 on=True),
            _obj("bed1", "bed", "in", "bedroom1", surface=True),
        ],
        "effect_rules": [
            {"device_class": "microwave", "trigger": "switchon", "when_contains": "any",
             "set_contents": {"temperature": "hot"}},
            {"device_class": "toaster", "trigger": "switchon",
             "when_contains": "breadslice", "set_contents": {"temperature": "hot"}},
        ],
    }


@pytest.fixture
def kitchen_world() -> WorldModel:
    return load_world(kitchen_doc())


@pytest.fixture
def house1_world() -> WorldModel:
    return load_world((PKG_DATA / "maps" / "house1.json").read_text(encoding="utf-8"))


def load_json(path: Path) -> object:
    return json.loads(path.read_text(encoding="utf-8"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" in nodeid and getattr(report, "when", "call") == "call":
                name = nodeid.split("::")[-1]
                lines.append((name, status.upper()))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"{status:<8} {name}")
