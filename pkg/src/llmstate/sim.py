"""Deterministic, partially observable household world.

The world holds ground truth (rooms, objects with placements, flags and
latent attributes, robot pose and hands), executes the nine primitive
actions with success/failure semantics, and renders textual observations.
Failed actions never mutate anything except the step counter, and the
failure reason is diagnostic only: it is never shown to the planner.

Visibility rule: the robot sees objects in its current room that are not
enclosed in a closed container, plus whatever it is holding.  Worlds may
opt into an accumulate mode where every previously visited room stays in
view, mirroring a perception stack that rescans on room entry.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from .dsl import ACTION_ARITY, PrimitiveAction


class SchemaError(ValueError):
    """The world document is malformed (missing field, duplicate id, ...)."""


class ConsistencyError(ValueError):
    """The world document is well-formed but self-contradictory."""


_ID_RE = re.compile(r"^([a-z][a-z0-9_]*?)([1-9][0-9]*)$")

REL_IN = "in"
REL_ON = "on"
REL_HELD = "held"


@dataclass
class Placement:
    rel: str
    parent: Optional[str]  # None iff held


@dataclass
class ObjectInstance:
    id: str
    class_name: str
    placement: Placement
    graspable: bool = False
    openable: bool = False
    switchable: bool = False
    is_container: bool = False
    is_surface: bool = False
    is_open: bool = False
    is_on: bool = False
    capacity: Optional[int] = None  # None means unlimited
    latent: dict[str, str] = field(default_factory=dict)
    # Which observation lists the object shows up in.  Detector categories
    # are not derivable from the interaction flags (shelving units act as
    # surfaces without being listed, appliances are listed as plain
    # objects), so worlds may override the defaults per object.
    listed_object: bool = False
    listed_container: bool = False
    listed_surface: bool = False

    def clone(self) -> "ObjectInstance":
        return ObjectInstance(
            id=self.id,
            class_name=self.class_name,
            placement=Placement(self.placement.rel, self.placement.parent),
            graspable=self.graspable,
            openable=self.openable,
            switchable=self.switchable,
            is_container=self.is_container,
            is_surface=self.is_surface,
            is_open=self.is_open,
            is_on=self.is_on,
            capacity=self.capacity,
            latent=dict(self.latent),
            listed_object=self.listed_object,
            listed_container=self.listed_container,
            listed_surface=self.listed_surface,
        )


@dataclass
class EffectRule:
    """Attribute assignment fired by a device interaction.

    When ``trigger`` (one of open/close/switchon/switchoff) succeeds on a
    device of ``device_class``, objects directly inside it that match
    ``when_contains`` (a class name, or "any") receive ``set_contents``;
    the device itself receives ``set_device``.  Assignments are idempotent.
    """

    device_class: str
    trigger: str
    when_contains: Optional[str] = "any"
    set_contents: dict[str, str] = field(default_factory=dict)
    set_device: dict[str, str] = field(default_factory=dict)


@dataclass
class RobotState:
    current_room: str
    close_to: list[str] = field(default_factory=list)
    holding: list[str] = field(default_factory=list)


@dataclass
class Observation:
    """The textual slice of the world the planner is allowed to see."""

    object_entries: list[str]
    container_entries: list[str]
    surface_entries: list[str]
    room_list: list[str]
    holding: list[str]
    close_to: list[str]
    current_room: str

    def render(self) -> str:
        return (
            f"Object List: {self.object_entries!r}\n"
            f"Container List: {self.container_entries!r}\n"
            f"Surface List: {self.surface_entries!r}\n"
            + self.render_tail()
        )

    def render_tail(self) -> str:
        """The room/holding/proximity tail used by the estimator prompt."""
        return (
            f"Room List: {self.room_list!r}\n"
            f"Current Holding: {self.holding!r}\n"
            f"You are closed to: {self.close_to!r}\n"
            f"Current Room: {self.current_room}"
        )


@dataclass
class ActionOutcome:
    success: bool
    internal_reason: str = ""  # diagnostic only; never shown to the planner


@dataclass
class WorldModel:
    rooms: list[str]
    objects: dict[str, ObjectInstance]
    robot: RobotState
    hand_capacity: int = 2
    interaction_needs_free_hand: bool = True
    accumulate_observations: bool = False
    effect_rules: list[EffectRule] = field(default_factory=list)
    visited_rooms: list[str] = field(default_factory=list)
    step_count: int = 0

    # -- queries ---------------------------------------------------------

    def room_of(self, obj_id: str) -> str:
        """The room an object's placement chain terminates in.

        Held objects count as being in the robot's current room.
        """
        seen = set()
        current = obj_id
        while True:
            obj = self.objects[current]
            if obj.placement.rel == REL_HELD:
                return self.robot.current_room
            parent = obj.placement.parent
            if parent in self.rooms or parent is None:
                return parent or self.robot.current_room
            if parent in seen:
                raise ConsistencyError(f"placement cycle at {parent!r}")
            seen.add(parent)
            current = parent

    def is_enclosed(self, obj_id: str) -> bool:
        """True when a closed container sits anywhere above the object."""
        current = self.objects[obj_id]
        while current.placement.rel != REL_HELD:
            parent = current.placement.parent
            if parent is None or parent in self.rooms:
                return False
            parent_obj = self.objects[parent]
            if (
                current.placement.rel == REL_IN
                and parent_obj.openable
                and not parent_obj.is_open
            ):
                return True
            current = parent_obj
        return False

    def contents_of(self, container_id: str) -> list[str]:
        return [
            o.id
            for o in self.objects.values()
            if o.placement.rel == REL_IN and o.placement.parent == container_id
        ]

    def visible_descendants(self, root_id: str) -> list[str]:
        """Objects under root whose path to it crosses no closed container."""
        out = []
        for obj in self.objects.values():
            if obj.id == root_id or obj.placement.rel == REL_HELD:
                continue
            current, blocked, found = obj, False, False
            while True:
                parent = current.placement.parent
                if parent is None or parent in self.rooms:
                    break
                parent_obj = self.objects[parent]
                if (
                    current.placement.rel == REL_IN
                    and parent_obj.openable
                    and not parent_obj.is_open
                ):
                    blocked = True
                    break
                if parent == root_id:
                    found = True
                    break
                current = parent_obj
            if found and not blocked:
                out.append(obj.id)
        return out

    # -- bookkeeping -----------------------------------------------------

    def clone(self) -> "WorldModel":
        return WorldModel(
            rooms=list(self.rooms),
            objects={oid: o.clone() for oid, o in self.objects.items()},
            robot=RobotState(
                current_room=self.robot.current_room,
                close_to=list(self.robot.close_to),
                holding=list(self.robot.holding),
            ),
            hand_capacity=self.hand_capacity,
            interaction_needs_free_hand=self.interaction_needs_free_hand,
            accumulate_observations=self.accumulate_observations,
            effect_rules=self.effect_rules,
            visited_rooms=list(self.visited_rooms),
            step_count=self.step_count,
        )

    def state_key(self) -> tuple:
        """Canonical hashable view of the mutable state (ignores step_count)."""
        return (
            self.robot.current_room,
            tuple(self.robot.close_to),
            tuple(self.robot.holding),
            tuple(self.visited_rooms),
            tuple(
                (
                    o.id,
                    o.placement.rel,
                    o.placement.parent,
                    o.is_open,
                    o.is_on,
                    tuple(sorted(o.latent.items())),
                )
                for o in self.objects.values()
            ),
        )

    def snapshot(self) -> dict:
        """JSON-ready dump of the full world state, for traces and tests."""
        return {
            "rooms": list(self.rooms),
            "robot": {
                "current_room": self.robot.current_room,
                "close_to": list(self.robot.close_to),
                "holding": list(self.robot.holding),
            },
            "visited_rooms": list(self.visited_rooms),
            "step_count": self.step_count,
            "objects": {
                o.id: {
                    "rel": o.placement.rel,
                    "parent": o.placement.parent,
                    "is_open": o.is_open,
                    "is_on": o.is_on,
                    "latent": dict(sorted(o.latent.items())),
                }
                for o in self.objects.values()
            },
        }


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _require(doc: dict, key: str, context: str) -> object:
    if key not in doc:
        raise SchemaError(f"{context}: missing field {key!r}")
    return doc[key]


def _check_id(token: str, context: str) -> None:
    if not isinstance(token, str) or not _ID_RE.match(token):
        raise SchemaError(
            f"{context}: id {token!r} must be a class name plus positive suffix"
        )


def load_world(document: Union[str, dict]) -> WorldModel:
    """Build a WorldModel from a JSON document (text or parsed).

    Raises SchemaError for malformed documents and ConsistencyError when the
    document violates world invariants (cyclic placement, capacity overflow,
    placement on a non-surface, ...).
    """
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"world document is not valid JSON: {exc}") from exc
    else:
        doc = document
    if not isinstance(doc, dict):
        raise SchemaError("world document must be a JSON object")

    rooms = _require(doc, "rooms", "world")
    if not isinstance(rooms, list) or not rooms:
        raise SchemaError("world: rooms must be a non-empty list")
    for room in rooms:
        _check_id(room, "rooms")
    if len(set(rooms)) != len(rooms):
        raise SchemaError("world: duplicate room id")

    robot_doc = _require(doc, "robot", "world")
    start_room = _require(robot_doc, "start_room", "robot")
    if start_room not in rooms:
        raise SchemaError(f"robot: start_room {start_room!r} is not a room")
    hand_capacity = int(robot_doc.get("hand_capacity", 2))
    if hand_capacity < 1:
        raise SchemaError("robot: hand_capacity must be positive")

    objects: dict[str, ObjectInstance] = {}
    for entry in doc.get("objects", []):
        oid = _require(entry, "id", "object")
        _check_id(oid, "object")
        if oid in objects or oid in rooms:
            raise SchemaError(f"object: duplicate id {oid!r}")
        class_name = _require(entry, "class", f"object {oid}")
        if not oid.startswith(class_name) or _ID_RE.match(oid).group(1) != class_name:
            raise SchemaError(f"object {oid}: id does not match class {class_name!r}")
        placement_doc = _require(entry, "placement", f"object {oid}")
        rel = _require(placement_doc, "rel", f"object {oid} placement")
        parent = _require(placement_doc, "parent", f"object {oid} placement")
        if rel not in (REL_IN, REL_ON):
            raise SchemaError(f"object {oid}: placement rel must be 'in' or 'on'")
        capacity = entry.get("capacity")
        if capacity is not None:
            capacity = int(capacity)
            if capacity < 0:
                raise SchemaError(f"object {oid}: capacity must be non-negative")
        obj = ObjectInstance(
            id=oid,
            class_name=class_name,
            placement=Placement(rel, parent),
            graspable=bool(entry.get("graspable", False)),
            openable=bool(entry.get("openable", False)),
            switchable=bool(entry.get("switchable", False)),
            is_container=bool(entry.get("container", False)),
            is_surface=bool(entry.get("surface", False)),
            is_open=bool(entry.get("open", False)),
            is_on=bool(entry.get("on", False)),
            capacity=capacity,
            latent={str(k): str(v) for k, v in entry.get("latent", {}).items()},
        )
        obj.listed_object = bool(
            entry.get("in_object_list", obj.graspable or obj.switchable)
        )
        obj.listed_container = bool(entry.get("in_container_list", obj.is_container))
        obj.listed_surface = bool(entry.get("in_surface_list", obj.is_surface))
        objects[oid] = obj

    rules = []
    for rule_doc in doc.get("effect_rules", []):
        trigger = _require(rule_doc, "trigger", "effect_rule")
        if trigger not in ("open", "close", "switchon", "switchoff"):
            raise SchemaError(f"effect_rule: bad trigger {trigger!r}")
        rules.append(
            EffectRule(
                device_class=_require(rule_doc, "device_class", "effect_rule"),
                trigger=trigger,
                when_contains=rule_doc.get("when_contains", "any"),
                set_contents={
                    str(k): str(v)
                    for k, v in rule_doc.get("set_contents", {}).items()
                },
                set_device={
                    str(k): str(v) for k, v in rule_doc.get("set_device", {}).items()
                },
            )
        )

    world = WorldModel(
        rooms=list(rooms),
        objects=objects,
        robot=RobotState(current_room=start_room),
        hand_capacity=hand_capacity,
        interaction_needs_free_hand=bool(
            robot_doc.get("interaction_needs_free_hand", True)
        ),
        accumulate_observations=bool(robot_doc.get("accumulate_observations", False)),
        effect_rules=rules,
        visited_rooms=[start_room],
    )
    _validate_consistency(world)
    return world


def load_world_file(path: Union[str, Path]) -> WorldModel:
    return load_world(Path(path).read_text(encoding="utf-8"))


def _validate_consistency(world: WorldModel) -> None:
    for obj in world.objects.values():
        parent = obj.placement.parent
        if parent in world.rooms:
            if obj.placement.rel == REL_ON:
                raise ConsistencyError(f"object {obj.id}: cannot be ON a room")
            continue
        if parent not in world.objects:
            raise SchemaError(f"object {obj.id}: unknown parent {parent!r}")
        parent_obj = world.objects[parent]
        if obj.placement.rel == REL_IN and not parent_obj.is_container:
            raise ConsistencyError(
                f"object {obj.id}: parent {parent!r} is not a container"
            )
        if obj.placement.rel == REL_ON and not parent_obj.is_surface:
            raise ConsistencyError(
                f"object {obj.id}: parent {parent!r} is not a surface"
            )
    # placement chains must be acyclic and reach a room
    for obj in world.objects.values():
        seen = {obj.id}
        current = obj
        while current.placement.parent not in world.rooms:
            parent = current.placement.parent
            if parent in seen:
                raise ConsistencyError(f"placement cycle involving {parent!r}")
            seen.add(parent)
            current = world.objects[parent]
    for obj in world.objects.values():
        if obj.is_container and obj.capacity is not None:
            if len(world.contents_of(obj.id)) > obj.capacity:
                raise ConsistencyError(f"container {obj.id}: over capacity at load")


# ---------------------------------------------------------------------------
# Observation
# ---------------------------------------------------------------------------


def observe(world: WorldModel) -> Observation:
    """Render the visible slice of the world; pure and deterministic."""
    if world.accumulate_observations:
        scope = set(world.visited_rooms)
    else:
        scope = {world.robot.current_room}
    object_entries, container_entries, surface_entries = [], [], []
    for obj in world.objects.values():
        if obj.placement.rel == REL_HELD:
            continue
        if world.room_of(obj.id) not in scope or world.is_enclosed(obj.id):
            continue
        rel = "IN" if obj.placement.rel == REL_IN else "ON"
        entry = f"{obj.id} {rel} {obj.placement.parent}"
        if obj.listed_object:
            object_entries.append(entry)
        if obj.listed_container:
            container_entries.append(entry)
        if obj.listed_surface:
            surface_entries.append(entry)
    return Observation(
        object_entries=object_entries,
        container_entries=container_entries,
        surface_entries=surface_entries,
        room_list=list(world.rooms),
        holding=list(world.robot.holding),
        close_to=list(world.robot.close_to),
        current_room=world.robot.current_room,
    )


# ---------------------------------------------------------------------------
# Action execution
# ---------------------------------------------------------------------------


def execute_action(world: WorldModel, action: PrimitiveAction) -> ActionOutcome:
    """Execute one primitive action against the world.

    Always increments the step counter.  On failure the world is otherwise
    left untouched and the outcome carries a diagnostic reason.  Unknown
    object ids are legal inputs and simply fail.
    """
    if action.kind not in ACTION_ARITY or len(action.args) != ACTION_ARITY[action.kind]:
        raise ValueError(f"malformed action: {action!r}")
    world.step_count += 1
    handler = _HANDLERS[action.kind]
    return handler(world, *action.args)


def _ok() -> ActionOutcome:
    return ActionOutcome(True)


def _fail(reason: str) -> ActionOutcome:
    return ActionOutcome(False, reason)


def _needs_free_hand(world: WorldModel) -> bool:
    return (
        world.interaction_needs_free_hand
        and len(world.robot.holding) >= world.hand_capacity
    )


def _do_move(world: WorldModel, target: str) -> ActionOutcome:
    robot = world.robot
    if target in world.rooms:
        robot.current_room = target
        robot.close_to = []
        if target not in world.visited_rooms:
            world.visited_rooms.append(target)
        return _ok()
    obj = world.objects.get(target)
    if obj is None:
        return _fail("not_found")
    if world.is_enclosed(target):
        return _fail("enclosed")
    room = world.room_of(target)
    robot.current_room = room
    if room not in world.visited_rooms:
        world.visited_rooms.append(room)
    robot.close_to = [target] + world.visible_descendants(target)
    return _ok()


def _do_pickup(world: WorldModel, target: str) -> ActionOutcome:
    robot = world.robot
    obj = world.objects.get(target)
    if obj is None:
        return _fail("not_found")
    if target in robot.holding:
        return _fail("already_held")
    if target not in robot.close_to:
        return _fail("not_close")
    if not obj.graspable:
        return _fail("not_graspable")
    if len(robot.holding) >= world.hand_capacity:
        return _fail("hands_full")
    obj.placement = Placement(REL_HELD, None)
    robot.holding.append(target)
    return _ok()


def _do_place(world: WorldModel, target: str, dest: str, rel: str) -> ActionOutcome:
    robot = world.robot
    obj = world.objects.get(target)
    dest_obj = world.objects.get(dest)
    if obj is None or dest_obj is None:
        return _fail("not_found")
    if target not in robot.holding:
        return _fail("not_holding")
    if dest in robot.holding:
        return _fail("held_destination")
    if dest not in robot.close_to:
        return _fail("not_close")
    if rel == REL_IN:
        if not dest_obj.is_container:
            return _fail("not_container")
        if dest_obj.openable and not dest_obj.is_open:
            return _fail("closed_container")
        if (
            dest_obj.capacity is not None
            and len(world.contents_of(dest)) >= dest_obj.capacity
        ):
            return _fail("capacity_full")
    else:
        if not dest_obj.is_surface:
            return _fail("not_surface")
    robot.holding.remove(target)
    obj.placement = Placement(rel, dest)
    if target not in robot.close_to:
        robot.close_to.append(target)
    return _ok()


def _fire_rules(world: WorldModel, device: ObjectInstance, trigger: str) -> None:
    for rule in world.effect_rules:
        if rule.device_class != device.class_name or rule.trigger != trigger:
            continue
        contents = [world.objects[c] for c in world.contents_of(device.id)]
        if rule.when_contains in (None, "any"):
            matching = contents
        else:
            matching = [c for c in contents if c.class_name == rule.when_contains]
            if not matching:
                continue
        for obj in matching:
            obj.latent.update(rule.set_contents)
        device.latent.update(rule.set_device)


def _do_toggle(world: WorldModel, target: str, kind: str) -> ActionOutcome:
    obj = world.objects.get(target)
    if obj is None:
        return _fail("not_found")
    if target not in world.robot.close_to:
        return _fail("not_close")
    if kind in ("open", "close"):
        if not obj.openable:
            return _fail("not_openable")
    elif not obj.switchable:
        return _fail("not_switchable")
    if _needs_free_hand(world):
        return _fail("hands_full")
    desired = kind in ("open", "switchon")
    current = obj.is_open if kind in ("open", "close") else obj.is_on
    if current == desired:
        return _fail("no_state_change")
    if kind in ("open", "close"):
        obj.is_open = desired
    else:
        obj.is_on = desired
    _fire_rules(world, obj, kind)
    return _ok()


_HANDLERS = {
    "move": _do_move,
    "pickup": _do_pickup,
    "placein": lambda w, x, c: _do_place(w, x, c, REL_IN),
    "placeon": lambda w, x, s: _do_place(w, x, s, REL_ON),
    "open": lambda w, x: _do_toggle(w, x, "open"),
    "close": lambda w, x: _do_toggle(w, x, "close"),
    "switchon": lambda w, x: _do_toggle(w, x, "switchon"),
    "switchoff": lambda w, x: _do_toggle(w, x, "switchoff"),
    "wait": lambda w: _ok(),
}


def check_goal(world: WorldModel, goal) -> bool:
    """Evaluate a goal predicate against ground truth (never the belief)."""
    return goal.satisfied(world)
