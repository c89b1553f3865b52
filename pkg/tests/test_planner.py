from __future__ import annotations

import ast

import pytest

from llmstate import bench
from llmstate.dsl import ActionRecord, PrimitiveAction
from llmstate.llmclient import Cassette, ReplayBackend
from llmstate.planner import (
    OUTCOME_GOAL,
    OUTCOME_LLM_BUDGET,
    OUTCOME_STALL,
    OUTCOME_STEP_CAP,
    PlannerConfig,
    attention_step,
    estimation_step,
    policy_step,
    run_episode,
)
from llmstate.sim import load_world, observe
from llmstate.staterep import LLMState, StateMode, parse_state_block

from conftest import DATA_DIR, PKG_DATA, kitchen_doc


def scripted(*responses):
    return ReplayBackend(Cassette.scripted(list(responses)))


def load_scripted_task(name):
    return bench.load_task(DATA_DIR / "tasks" / f"{name}.json")


def scripted_backend(name):
    return ReplayBackend(Cassette.load(DATA_DIR / "cassettes" / f"{name}.json"))


# ---------------------------------------------------------------------------
# individual steps
# ---------------------------------------------------------------------------

def test_attention_step_grows_key_objects():
    world = load_world(kitchen_doc())
    backend = scripted(("attention",
                        'add_related_objects("lightswitch1")\n'
                        'add_related_objects("lightswitch2")'))
    state = attention_step(LLMState(), observe(world), "switch off the lights", backend)
    assert state.key_objects == ["lightswitch1", "lightswitch2"]


def test_attention_step_noop_on_prose():
    world = load_world(kitchen_doc())
    backend = scripted(("attention", "I think the lights are relevant."))
    state = attention_step(LLMState({"a1": []}), observe(world), "x", backend)
    assert state.key_objects == ["a1"]


def test_attention_step_idempotent_re_add():
    world = load_world(kitchen_doc())
    backend = scripted(("attention", 'add_related_objects("a1")'))
    before = LLMState({"a1": ["on"]})
    state = attention_step(before, observe(world), "x", backend)
    assert state.attributes == {"a1": ["on"]}


def test_estimation_step_applies_directives():
    world = load_world(kitchen_doc())
    backend = scripted(("estimator",
                        'update_state("lightswitch1", "off")\n'
                        'update_state("bedroom1", "robot_inside")\n'
                        'update_reasoning("switched it off")'))
    history = [ActionRecord(PrimitiveAction("switchoff", ("lightswitch1",)), True)]
    state = estimation_step(LLMState({"lightswitch1": []}), history, observe(world), backend)
    assert state.attributes["lightswitch1"] == ["off"]
    assert state.attributes["bedroom1"] == ["robot_inside"]
    assert state.summary == "switched it off"


def test_estimation_step_cold_start_unchanged():
    world = load_world(kitchen_doc())
    backend = scripted(("estimator", ""))
    state = estimation_step(LLMState(), [], observe(world), backend)
    assert state.attributes == {} and state.summary == ""


def test_policy_step_parses_plan():
    world = load_world(kitchen_doc())
    backend = scripted(("policy", "Low-level Action Plan:\n1. move(fridge1)\n2. open(fridge1)"))
    plan = policy_step(LLMState(), observe(world), "open the fridge", [],
                       PlannerConfig(), backend)
    assert plan == [PrimitiveAction("move", ("fridge1",)),
                    PrimitiveAction("open", ("fridge1",))]


def test_policy_step_free_prose_yields_empty():
    world = load_world(kitchen_doc())
    backend = scripted(("policy", "I would suggest exploring the kitchen."))
    assert policy_step(LLMState(), observe(world), "x", [], PlannerConfig(), backend) == []


# ---------------------------------------------------------------------------
# full episodes (scripted cassettes)
# ---------------------------------------------------------------------------

def test_heat_milk_cap1_recovery_episode():
    task = load_scripted_task("heat_milk_cap1")
    result = run_episode(task, scripted_backend("heat_milk_cap1"), PlannerConfig())
    assert result.success and result.outcome == OUTCOME_GOAL
    assert result.steps_executed == 19
    # the one-armed failure and its recovery are both in the trace
    round0 = [a["record"] for a in result.trace[0]["actions"]]
    assert round0[-1] == "['open', 'microwave1'](Fail)"
    assert result.final_state.attributes["milk1"] == ["in_microwave", "hot"]


def test_cabinet_episode_reproduces_walkthrough_history():
    task = load_scripted_task("cabinet_knife")
    result = run_episode(task, scripted_backend("cabinet_knife"), PlannerConfig())
    assert result.success
    records = [a["record"] for rnd in result.trace for a in rnd["actions"]]
    expected_line = (DATA_DIR / "golden" / "cabinet_history_line.txt").read_text().rstrip("\n")
    assert repr(records[:7]) == expected_line
    # the estimator prompt of the final round contains the 7-record history
    final_estimator = [c for c in result.trace[2]["calls"] if c["role"] == "estimator"]
    assert expected_line in final_estimator[0]["prompt"]


def test_trace_invariants_on_scripted_episodes():
    for name in ("heat_milk_cap1", "cabinet_knife"):
        task = load_scripted_task(name)
        result = run_episode(task, scripted_backend(name), PlannerConfig())
        # step accounting
        total_actions = sum(len(r["actions"]) for r in result.trace)
        assert total_actions == result.steps_executed
        # break-on-failure: a Fail can only be the last action of its round
        for rnd in result.trace:
            records = [a["record"] for a in rnd["actions"]]
            for rec in records[:-1]:
                assert rec.endswith("(Success)")
        # estimation runs every round (after failures and after full success)
        for rnd in result.trace:
            assert any(c["role"] == "estimator" for c in rnd["calls"])
        # key objects grow monotonically across rounds
        keys_prev: set[str] = set()
        for rnd in result.trace:
            keys = set(parse_state_block(rnd["state"]).key_objects)
            assert keys_prev <= keys
            keys_prev = keys


def test_stall_after_consecutive_empty_plans():
    task = load_scripted_task("heat_milk_cap1")
    responses = []
    for _ in range(3):
        responses += [("attention", ""), ("estimator", ""), ("policy", "no plan")]
    result = run_episode(task, scripted(*responses), PlannerConfig(stall_limit=3))
    assert not result.success
    assert result.outcome == OUTCOME_STALL
    assert result.steps_executed == 0
    assert result.llm_calls == 9


def test_llm_budget_exhaustion():
    task = load_scripted_task("heat_milk_cap1")
    result = run_episode(task, scripted_backend("heat_milk_cap1"),
                         PlannerConfig(max_llm_calls=2))
    assert not result.success
    assert result.outcome == OUTCOME_LLM_BUDGET
    assert result.llm_calls == 2


def test_step_cap_terminates_episode():
    task = load_scripted_task("heat_milk_cap1")
    result = run_episode(task, scripted_backend("heat_milk_cap1"),
                         PlannerConfig(max_steps=3))
    assert not result.success
    assert result.outcome == OUTCOME_STEP_CAP
    assert result.steps_executed == 3


def test_goal_already_satisfied_runs_zero_steps(tmp_path):
    import json
    task_doc = {
        "id": "noop", "instruction": "close the fridge",
        "world": "world.json",
        "goal": {"all": [{"kind": "container_open", "target": "fridge1", "open": False}]},
        "step_cap": 10, "difficulty": "simple", "trials": 1,
    }
    (tmp_path / "world.json").write_text(json.dumps(kitchen_doc()))
    (tmp_path / "task.json").write_text(json.dumps(task_doc))
    task = bench.load_task(tmp_path / "task.json")
    result = run_episode(task, scripted(), PlannerConfig())
    assert result.success and result.steps_executed == 0 and result.llm_calls == 0


def test_cassette_miss_is_recorded_as_error():
    task = load_scripted_task("heat_milk_cap1")
    result = run_episode(task, scripted(("attention", "x")), PlannerConfig())
    assert not result.success
    assert result.outcome == "error"
    assert "estimator" in result.error


def test_no_states_mode_skips_belief_roles():
    task = bench.load_task(PKG_DATA / "tasks" / "switch_off_all_lights.json")
    backend = ReplayBackend(Cassette.load(PKG_DATA / "cassettes" / "switch_off_all_lights.json"))
    result = run_episode(task, backend, PlannerConfig(state_mode=StateMode.NO_STATES))
    assert result.success
    roles = {c["role"] for rnd in result.trace for c in rnd["calls"]}
    assert roles == {"policy"}
    for rnd in result.trace:
        for call in rnd["calls"]:
            assert "******** current state start ********" not in call["prompt"]


def test_policy_budget_slot_shrinks_with_remaining_steps():
    task = load_scripted_task("heat_milk_cap1")
    result = run_episode(task, scripted_backend("heat_milk_cap1"),
                         PlannerConfig(plan_horizon_budget=20))
    # first round: min(20, 30 - 0) = 20; budget never exceeds remaining cap
    first_policy = [c for c in result.trace[0]["calls"] if c["role"] == "policy"][0]
    assert "less than `20` steps" in first_policy["prompt"]
    last_policy = [c for c in result.trace[2]["calls"] if c["role"] == "policy"][0]
    assert "less than `15` steps" in last_policy["prompt"]


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(stall_limit=0)
    with pytest.raises(ValueError):
        PlannerConfig(max_steps=0)
