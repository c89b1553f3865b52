"""Closed-loop episode execution.

Each round observes the world, lets the attention role grow the key-object
set, lets the estimator role rewrite attributes and the retrospective
summary from the full history, asks the policy role for a plan, and then
executes the plan sequentially, breaking back into replanning at the first
failed action.  The episode ends when the goal predicate holds against
ground truth, the step cap is hit, the policy stalls on empty plans, or the
completion-call budget runs out.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

from . import dsl, llmclient, prompts, sim
from .dsl import ActionRecord, AddRelatedObjects, PrimitiveAction
from .llmclient import Backend, BudgetExceeded, BudgetGuard, ChatMessage, ChatRequest
from .staterep import (
    LLMState,
    StateMode,
    apply_estimation,
    register_key_objects,
    render_state,
)

if TYPE_CHECKING:  # pragma: no cover - typing only
    from .bench import TaskSpec

OUTCOME_GOAL = "goal"
OUTCOME_STEP_CAP = "step_cap"
OUTCOME_STALL = "stall"
OUTCOME_LLM_BUDGET = "llm_budget"
OUTCOME_ERROR = "error"

TRACE_VERSION = 1


@dataclass
class PlannerConfig:
    state_mode: StateMode = StateMode.FULL
    max_steps: Optional[int] = None  # None: use the task's step cap
    plan_horizon_budget: int = 20
    max_llm_calls: int = 150
    stall_limit: int = 3

    def __post_init__(self) -> None:
        if self.stall_limit < 1:
            raise ValueError("stall_limit must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.plan_horizon_budget < 1:
            raise ValueError("plan_horizon_budget must be >= 1")


@dataclass
class EpisodeResult:
    task_id: str
    success: bool
    steps_executed: int
    outcome: str
    trace: list[dict] = field(default_factory=list)
    final_state: LLMState = field(default_factory=LLMState)
    llm_calls: int = 0
    step_cap: int = 0
    error: str = ""

    def trace_document(self, mode: StateMode) -> dict:
        """Versioned, replayable trace for the CLI inspector."""
        return {
            "version": TRACE_VERSION,
            "task_id": self.task_id,
            "mode": mode.value,
            "outcome": self.outcome,
            "success": self.success,
            "steps_executed": self.steps_executed,
            "llm_calls": self.llm_calls,
            "rounds": self.trace,
        }


def _request(backend: Backend, text: str) -> ChatRequest:
    return ChatRequest(
        messages=(ChatMessage("user", text),),
        model=backend.model_name,
    )


def _call(backend, bundle: prompts.PromptBundle, round_index: int,
          calls: Optional[list[dict]] = None) -> str:
    response = backend.complete(
        _request(backend, bundle.rendered_text), role=bundle.role, step=round_index
    )
    if calls is not None:
        calls.append(
            {"role": bundle.role, "prompt": bundle.rendered_text, "response": response}
        )
    return response


def attention_step(
    state: LLMState,
    observation: sim.Observation,
    instruction: str,
    backend: Backend,
    *,
    round_index: int = 0,
    calls: Optional[list[dict]] = None,
) -> LLMState:
    """Grow the key-object set from the current observation; only-add."""
    bundle = prompts.build_attention_prompt(
        render_state(state), observation.render(), instruction
    )
    response = _call(backend, bundle, round_index, calls)
    directives, _ = dsl.parse_directives(response)
    names = [d.name for d in directives if isinstance(d, AddRelatedObjects)]
    if calls is not None and calls:
        calls[-1]["parsed"] = names
    return register_key_objects(state, names)


def estimation_step(
    state: LLMState,
    history: list[ActionRecord],
    observation: sim.Observation,
    backend: Backend,
    *,
    round_index: int = 0,
    calls: Optional[list[dict]] = None,
) -> LLMState:
    """Re-estimate attributes and the summary from the full history."""
    records = [dsl.render_action_record(r) for r in history]
    bundle = prompts.build_estimator_prompt(
        render_state(state), records, observation.render_tail()
    )
    response = _call(backend, bundle, round_index, calls)
    directives, _ = dsl.parse_directives(response)
    if calls is not None and calls:
        calls[-1]["parsed"] = [repr(d) for d in directives]
    return apply_estimation(state, directives)


def policy_step(
    state: LLMState,
    observation: sim.Observation,
    instruction: str,
    history: list[ActionRecord],
    config: PlannerConfig,
    backend: Backend,
    *,
    steps_executed: int = 0,
    step_cap: Optional[int] = None,
    round_index: int = 0,
    calls: Optional[list[dict]] = None,
) -> list[PrimitiveAction]:
    """Ask for a plan; returns a possibly empty action list."""
    records = [dsl.render_action_record(r) for r in history]
    budget = config.plan_horizon_budget
    if step_cap is not None:
        budget = min(budget, step_cap - steps_executed)
    budget = max(1, budget)
    bundle = prompts.build_policy_prompt(
        instruction,
        records,
        observation.render(),
        render_state(state, config.state_mode),
        budget,
        config.state_mode,
    )
    response = _call(backend, bundle, round_index, calls)
    plan = dsl.parse_plan(response)
    if calls is not None and calls:
        calls[-1]["parsed"] = [a.render() for a in plan]
    return plan


def run_episode(task: "TaskSpec", backend: Backend, config: Optional[PlannerConfig] = None) -> EpisodeResult:
    """Run one closed-loop episode against a fresh world."""
    config = config or PlannerConfig()
    world = sim.load_world_file(task.world_file)
    cap = config.max_steps if config.max_steps is not None else task.step_cap
    guarded = BudgetGuard(backend, config.max_llm_calls)
    state = LLMState()
    history: list[ActionRecord] = []
    rounds: list[dict] = []
    outcome: Optional[str] = None
    error = ""
    empty_streak = 0
    round_index = 0

    if sim.check_goal(world, task.goal):
        outcome = OUTCOME_GOAL

    while outcome is None:
        observation = sim.observe(world)
        calls: list[dict] = []
        round_record: dict = {"round": round_index, "observation": observation.render(),
                              "calls": calls, "actions": []}
        rounds.append(round_record)
        try:
            # The naive no-states ablation keeps no belief, so the attention
            # and estimation roles are skipped entirely in that mode.
            if config.state_mode != StateMode.NO_STATES:
                state = attention_step(
                    state, observation, task.instruction, guarded,
                    round_index=round_index, calls=calls,
                )
                state = estimation_step(
                    state, history, observation, guarded,
                    round_index=round_index, calls=calls,
                )
            plan = policy_step(
                state, observation, task.instruction, history, config, guarded,
                steps_executed=world.step_count, step_cap=cap,
                round_index=round_index, calls=calls,
            )
        except BudgetExceeded:
            outcome = OUTCOME_LLM_BUDGET
            break
        except llmclient.CassetteMiss as exc:
            outcome = OUTCOME_ERROR
            error = str(exc)
            break
        round_record["state"] = render_state(state)
        round_record["plan"] = [a.render() for a in plan]
        round_index += 1

        if not plan:
            empty_streak += 1
            if empty_streak >= config.stall_limit:
                outcome = OUTCOME_STALL
            continue
        empty_streak = 0

        for action in plan:
            result = sim.execute_action(world, action)
            record = ActionRecord(action, result.success)
            history.append(record)
            round_record["actions"].append(
                {"record": dsl.render_action_record(record)}
            )
            if sim.check_goal(world, task.goal):
                outcome = OUTCOME_GOAL
            elif world.step_count >= cap:
                outcome = OUTCOME_STEP_CAP
            if outcome is not None or not result.success:
                break

    return EpisodeResult(
        task_id=task.id,
        success=outcome == OUTCOME_GOAL,
        steps_executed=world.step_count,
        outcome=outcome,
        trace=rounds,
        final_state=state,
        llm_calls=guarded.calls_made,
        step_cap=cap,
        error=error,
    )
