"""Goal predicates evaluated against the simulator's ground truth.

A goal is a conjunction of atoms.  Object and parent arguments accept
either a concrete id or a class name (id match wins); unknown tokens make
the atom unsatisfied rather than raising.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Sequence

from .sim import REL_IN, REL_ON, ObjectInstance, WorldModel

_OPS = {
    ">=": operator.ge,
    "<=": operator.le,
    "==": operator.eq,
    "!=": operator.ne,
    ">": operator.gt,
    "<": operator.lt,
}


def _resolve(world: WorldModel, token: str) -> list[ObjectInstance]:
    if token in world.objects:
        return [world.objects[token]]
    return [o for o in world.objects.values() if o.class_name == token]


def _parent_matches(world: WorldModel, obj: ObjectInstance, token: str) -> bool:
    parent = obj.placement.parent
    if parent is None:
        return False
    if parent == token:
        return True
    parent_obj = world.objects.get(parent)
    return parent_obj is not None and parent_obj.class_name == token


@dataclass(frozen=True)
class ObjectIn:
    obj: str
    container: str

    def satisfied(self, world: WorldModel) -> bool:
        return any(
            o.placement.rel == REL_IN and _parent_matches(world, o, self.container)
            for o in _resolve(world, self.obj)
        )


@dataclass(frozen=True)
class ObjectOn:
    obj: str
    surface: str

    def satisfied(self, world: WorldModel) -> bool:
        return any(
            o.placement.rel == REL_ON and _parent_matches(world, o, self.surface)
            for o in _resolve(world, self.obj)
        )


@dataclass(frozen=True)
class Switched:
    target: str
    state: str  # "on" | "off"

    def satisfied(self, world: WorldModel) -> bool:
        obj = world.objects.get(self.target)
        return obj is not None and obj.is_on == (self.state == "on")


@dataclass(frozen=True)
class ContainerOpen:
    target: str
    open: bool

    def satisfied(self, world: WorldModel) -> bool:
        obj = world.objects.get(self.target)
        return obj is not None and obj.is_open == self.open


@dataclass(frozen=True)
class AttributeIs:
    target: str
    key: str
    value: str

    def satisfied(self, world: WorldModel) -> bool:
        obj = world.objects.get(self.target)
        return obj is not None and obj.latent.get(self.key) == self.value


@dataclass(frozen=True)
class CountRel:
    """CountOn / CountIn: objects supported by / contained in a target.

    Counting is transitive so stacking does not game the goal: a mug on a
    plate on the table still counts as being on the table.  The relation is
    taken from the hop that arrives at the target.
    """

    rel: str  # "on" | "in"
    obj: str  # class, id, or "any"
    target: str
    op: str
    count: int

    def _reaches_target(self, world: WorldModel, obj: ObjectInstance) -> bool:
        current = obj
        while current.placement.rel not in ("held",) and current.placement.parent:
            if _parent_matches(world, current, self.target):
                return current.placement.rel == self.rel
            parent = world.objects.get(current.placement.parent)
            if parent is None:  # reached a room
                return False
            current = parent
        return False

    def value(self, world: WorldModel) -> int:
        total = 0
        for o in world.objects.values():
            if self.obj != "any" and o.id != self.obj and o.class_name != self.obj:
                continue
            if self._reaches_target(world, o):
                total += 1
        return total

    def satisfied(self, world: WorldModel) -> bool:
        return _OPS[self.op](self.value(world), self.count)


Atom = object  # any of the dataclasses above


@dataclass(frozen=True)
class GoalPredicate:
    atoms: tuple

    def satisfied(self, world: WorldModel) -> bool:
        return all(atom.satisfied(world) for atom in self.atoms)


def goal_from_dict(doc: dict) -> GoalPredicate:
    atoms = []
    for entry in doc.get("all", []):
        kind = entry["kind"]
        if kind == "object_in":
            atoms.append(ObjectIn(entry["object"], entry["container"]))
        elif kind == "object_on":
            atoms.append(ObjectOn(entry["object"], entry["surface"]))
        elif kind == "switched":
            atoms.append(Switched(entry["target"], entry["state"]))
        elif kind == "container_open":
            atoms.append(ContainerOpen(entry["target"], bool(entry["open"])))
        elif kind == "attribute_is":
            atoms.append(AttributeIs(entry["target"], entry["key"], entry["value"]))
        elif kind in ("count_on", "count_in"):
            atoms.append(
                CountRel(
                    rel=REL_ON if kind == "count_on" else REL_IN,
                    obj=entry.get("object", "any"),
                    target=entry["target"],
                    op=entry.get("op", ">="),
                    count=int(entry["count"]),
                )
            )
        else:
            raise ValueError(f"unknown goal atom kind: {kind!r}")
    return GoalPredicate(tuple(atoms))


def goal_to_dict(goal: GoalPredicate) -> dict:
    out = []
    for atom in goal.atoms:
        if isinstance(atom, ObjectIn):
            out.append({"kind": "object_in", "object": atom.obj, "container": atom.container})
        elif isinstance(atom, ObjectOn):
            out.append({"kind": "object_on", "object": atom.obj, "surface": atom.surface})
        elif isinstance(atom, Switched):
            out.append({"kind": "switched", "target": atom.target, "state": atom.state})
        elif isinstance(atom, ContainerOpen):
            out.append({"kind": "container_open", "target": atom.target, "open": atom.open})
        elif isinstance(atom, AttributeIs):
            out.append(
                {"kind": "attribute_is", "target": atom.target, "key": atom.key, "value": atom.value}
            )
        elif isinstance(atom, CountRel):
            out.append(
                {
                    "kind": "count_on" if atom.rel == REL_ON else "count_in",
                    "object": atom.obj,
                    "target": atom.target,
                    "op": atom.op,
                    "count": atom.count,
                }
            )
    return {"all": out}
