"""Brute-force solver and oracle-cassette authoring.

The solver searches the simulator itself under full observability: it
serializes the goal into per-atom subgoals (count atoms are stepped one
unit at a time), then runs breadth-first search over cloned worlds for each
subgoal, restricting the action menu to objects relevant to the goal.  The
resulting shortest plans are written into scripted cassettes so the whole
benchmark suite replays deterministically without any model in the loop.

Regenerate the bundled cassettes with ``python -m llmstate.oracle``.
"""

from __future__ import annotations

from collections import deque
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

from .bench import TaskSpec, bundled_cassette_dir, bundled_suite_path, load_suite
from .dsl import PrimitiveAction, render_plan
from .goals import AttributeIs, CountRel, GoalPredicate, ObjectIn, ObjectOn, _resolve
from .llmclient import Cassette, CassetteEntry
from .sim import REL_IN, WorldModel, execute_action, load_world_file


class UnsolvableTask(RuntimeError):
    """The search exhausted its budget without reaching the subgoal."""


def _ancestors(world: WorldModel, obj_id: str) -> list[str]:
    out = []
    current = world.objects[obj_id]
    while current.placement.parent not in world.rooms and current.placement.parent:
        out.append(current.placement.parent)
        current = world.objects[current.placement.parent]
    return out


def relevant_ids(world: WorldModel, goal: GoalPredicate) -> list[str]:
    """Objects the search is allowed to interact with, in document order.

    Kept deliberately tight: goal objects and their enclosing containers,
    goal destinations, devices whose effect rules can produce a wanted
    attribute, and - so the robot always has somewhere to put things down -
    the surfaces in rooms the goal already touches.
    """
    relevant: set[str] = set()

    def add_token(token: str) -> None:
        for obj in _resolve(world, token):
            relevant.add(obj.id)
            relevant.update(_ancestors(world, obj.id))

    for atom in goal.atoms:
        if isinstance(atom, ObjectIn):
            add_token(atom.obj)
            add_token(atom.container)
        elif isinstance(atom, ObjectOn):
            add_token(atom.obj)
            add_token(atom.surface)
        elif isinstance(atom, AttributeIs):
            add_token(atom.target)
            # devices whose rules can produce the wanted attribute value
            for rule in world.effect_rules:
                effects = dict(rule.set_contents) | dict(rule.set_device)
                if effects.get(atom.key) == atom.value:
                    for obj in world.objects.values():
                        if obj.class_name == rule.device_class:
                            relevant.add(obj.id)
                            relevant.update(_ancestors(world, obj.id))
        elif isinstance(atom, CountRel):
            add_token(atom.target)
            if atom.obj != "any":
                add_token(atom.obj)
            else:
                # reducing a count means moving whatever sits there now
                targets = {t.id for t in _resolve(world, atom.target)}
                for obj in world.objects.values():
                    if obj.placement.parent in targets:
                        relevant.add(obj.id)
        else:  # Switched / ContainerOpen
            add_token(atom.target)

    rooms_touched = {world.room_of(oid) for oid in relevant}
    for obj in world.objects.values():
        if obj.is_surface and world.room_of(obj.id) in rooms_touched:
            relevant.add(obj.id)
    # document order keeps the search (and therefore the cassettes) stable
    return [oid for oid in world.objects if oid in relevant]


def _candidate_actions(world: WorldModel, relevant: list[str]) -> Iterable[PrimitiveAction]:
    for room in world.rooms:
        yield PrimitiveAction("move", (room,))
    for oid in relevant:
        obj = world.objects[oid]
        yield PrimitiveAction("move", (oid,))
        if obj.graspable:
            yield PrimitiveAction("pickup", (oid,))
        if obj.openable:
            yield PrimitiveAction("open", (oid,))
            yield PrimitiveAction("close", (oid,))
        if obj.switchable:
            yield PrimitiveAction("switchon", (oid,))
            yield PrimitiveAction("switchoff", (oid,))
    for held in world.robot.holding:
        for oid in relevant:
            obj = world.objects[oid]
            if obj.is_container and oid != held:
                yield PrimitiveAction("placein", (held, oid))
            if obj.is_surface and oid != held:
                yield PrimitiveAction("placeon", (held, oid))


def _bfs(
    start: WorldModel,
    done: Callable[[WorldModel], bool],
    relevant: list[str],
    max_nodes: int = 500_000,
) -> list[PrimitiveAction]:
    if done(start):
        return []
    queue: deque[tuple[WorldModel, list[PrimitiveAction]]] = deque([(start, [])])
    seen = {start.state_key()}
    expanded = 0
    while queue:
        world, plan = queue.popleft()
        expanded += 1
        if expanded > max_nodes:
            raise UnsolvableTask(f"search exceeded {max_nodes} nodes")
        for action in _candidate_actions(world, relevant):
            child = world.clone()
            if not execute_action(child, action).success:
                continue
            key = child.state_key()
            if key in seen:
                continue
            seen.add(key)
            child_plan = plan + [action]
            if done(child):
                return child_plan
            queue.append((child, child_plan))
    raise UnsolvableTask("search space exhausted")


def _subgoal_done(prior: list, atom, world: WorldModel) -> bool:
    return all(a.satisfied(world) for a in prior) and atom.satisfied(world)


def solve_world(world: WorldModel, goal: GoalPredicate) -> list[PrimitiveAction]:
    """Shortest-ish plan reaching the goal, by serialized per-atom search."""
    relevant = relevant_ids(world, goal)
    current = world.clone()
    plan: list[PrimitiveAction] = []
    prior: list = []
    for atom in goal.atoms:
        if isinstance(atom, CountRel) and atom.op != "!=":
            # step the count one unit per search so each BFS stays shallow
            while not atom.satisfied(current):
                value = atom.value(current)
                if atom.op in (">=", ">") or (atom.op == "==" and value < atom.count):
                    stepped = CountRel(atom.rel, atom.obj, atom.target, ">=", value + 1)
                else:
                    stepped = CountRel(atom.rel, atom.obj, atom.target, "<=", value - 1)
                segment = _bfs(
                    current,
                    lambda w, s=stepped: _subgoal_done(prior, s, w),
                    relevant,
                )
                for action in segment:
                    execute_action(current, action)
                plan.extend(segment)
        else:
            segment = _bfs(
                current, lambda w, a=atom: _subgoal_done(prior, a, w), relevant
            )
            for action in segment:
                execute_action(current, action)
            plan.extend(segment)
        prior.append(atom)
    assert goal.satisfied(current)
    return plan


def solve_task(task: TaskSpec) -> list[PrimitiveAction]:
    return solve_world(load_world_file(task.world_file), task.goal)


def build_oracle_cassette(task: TaskSpec) -> Cassette:
    """Script one round of attention/estimation/policy from a solved plan."""
    plan = solve_task(task)
    if len(plan) > task.step_cap:
        raise UnsolvableTask(
            f"{task.id}: plan length {len(plan)} exceeds cap {task.step_cap}"
        )
    seen: list[str] = []
    for action in plan:
        for arg in action.args:
            if arg not in seen:
                seen.append(arg)
    attention = "\n".join(f'add_related_objects("{name}")' for name in seen)
    estimator = (
        'update_reasoning("No actions have been executed yet; '
        'the objects listed above are the ones relevant to the task.")'
    )
    policy = "Low-level Action Plan:\n" + render_plan(plan)
    cassette = Cassette(
        entries=[
            CassetteEntry(role="attention", step=0, response=attention),
            CassetteEntry(role="estimator", step=0, response=estimator),
            CassetteEntry(role="policy", step=0, response=policy),
        ],
        meta={"task": task.id, "source": "oracle-search", "plan_length": len(plan)},
    )
    return cassette


def generate_all(
    suite_path: Optional[Union[str, Path]] = None,
    out_dir: Optional[Union[str, Path]] = None,
) -> list[tuple[str, int]]:
    suite_path = Path(suite_path) if suite_path else bundled_suite_path()
    out_dir = Path(out_dir) if out_dir else bundled_cassette_dir()
    written = []
    for task in load_suite(suite_path):
        cassette = build_oracle_cassette(task)
        cassette.save(out_dir / f"{task.id}.json")
        written.append((task.id, cassette.meta["plan_length"]))
    return written


if __name__ == "__main__":  # pragma: no cover
    for task_id, length in generate_all():
        print(f"{task_id}: {length} steps")
