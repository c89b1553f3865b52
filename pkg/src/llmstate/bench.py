"""Task-suite definition, episode batching, and SR/AS reporting.

Success rate is successes over trials; average steps counts a failed trial
at the task's step cap, so an all-fail task reports AS equal to its cap.
Reports are deterministic under the replay backend regardless of episode
parallelism (results are keyed and aggregated in manifest order, and the
parallelism level itself is deliberately not echoed into the report).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from .goals import GoalPredicate, goal_from_dict
from .llmclient import Backend, Cassette, ReplayBackend
from .planner import EpisodeResult, PlannerConfig, run_episode

DIFFICULTIES = ("simple", "hard")
SIMPLE_STEP_CAP_LIMIT = 30


@dataclass(frozen=True)
class TaskSpec:
    id: str
    instruction: str
    world_file: Path
    goal: GoalPredicate
    step_cap: int
    difficulty: str
    trials: int = 5

    def __post_init__(self) -> None:
        if self.difficulty not in DIFFICULTIES:
            raise ValueError(f"bad difficulty {self.difficulty!r}")
        if self.step_cap < 1 or self.trials < 1:
            raise ValueError("step_cap and trials must be positive")
        if self.difficulty == "simple" and self.step_cap > SIMPLE_STEP_CAP_LIMIT:
            raise ValueError(
                f"simple task {self.id} has step_cap {self.step_cap} > "
                f"{SIMPLE_STEP_CAP_LIMIT}"
            )


def load_task(path: Union[str, Path]) -> TaskSpec:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    return TaskSpec(
        id=doc["id"],
        instruction=doc["instruction"],
        world_file=(path.parent / doc["world"]).resolve(),
        goal=goal_from_dict(doc["goal"]),
        step_cap=int(doc["step_cap"]),
        difficulty=doc["difficulty"],
        trials=int(doc.get("trials", 5)),
    )


def load_suite(path: Union[str, Path]) -> list[TaskSpec]:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    return [load_task(path.parent / rel) for rel in doc["tasks"]]


def bundled_data_dir() -> Path:
    return Path(str(resources.files("llmstate") / "data"))


def bundled_suite_path() -> Path:
    return bundled_data_dir() / "suite.json"


def bundled_cassette_dir() -> Path:
    return bundled_data_dir() / "cassettes"


def compute_metrics(results: Sequence[EpisodeResult], step_cap: int) -> tuple[float, float]:
    """(SR, AS) over one task's trials; failed trials count at the cap."""
    if not results:
        raise ValueError("compute_metrics needs at least one result")
    successes = sum(1 for r in results if r.success)
    steps = [r.steps_executed if r.success else step_cap for r in results]
    return successes / len(results), sum(steps) / len(steps)


@dataclass
class TaskRow:
    task_id: str
    instruction: str
    difficulty: str
    trials: int
    step_cap: int
    sr: float
    avg_steps: float
    outcomes: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)


@dataclass
class SuiteReport:
    mode: str
    backend_id: str
    task_rows: list[TaskRow]

    def difficulty_means(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for level in DIFFICULTIES:
            rows = [r for r in self.task_rows if r.difficulty == level]
            if rows:
                out[level] = {
                    "sr_mean": sum(r.sr for r in rows) / len(rows),
                    "as_mean": sum(r.avg_steps for r in rows) / len(rows),
                }
        return out

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "mode": self.mode,
            "backend": self.backend_id,
            "tasks": [
                {
                    "id": r.task_id,
                    "instruction": r.instruction,
                    "difficulty": r.difficulty,
                    "trials": r.trials,
                    "step_cap": r.step_cap,
                    "sr": r.sr,
                    "avg_steps": round(r.avg_steps, 4),
                    "outcomes": r.outcomes,
                    "errors": r.errors,
                }
                for r in self.task_rows
            ],
            "difficulty_means": {
                level: {k: round(v, 4) for k, v in means.items()}
                for level, means in self.difficulty_means().items()
            },
        }

    def render_text(self) -> str:
        lines = [
            f"mode={self.mode} backend={self.backend_id}",
            f"{'task':<28} {'diff':<7} {'SR':>6} {'AS':>8} {'cap':>5}",
        ]
        for r in self.task_rows:
            lines.append(
                f"{r.task_id:<28} {r.difficulty:<7} "
                f"{r.sr:>6.2f} {r.avg_steps:>8.1f} {r.step_cap:>5}"
            )
        for level, means in self.difficulty_means().items():
            lines.append(
                f"{level} mean: SR={means['sr_mean']:.4f} AS={means['as_mean']:.2f}"
            )
        return "\n".join(lines) + "\n"


BackendFactory = Callable[[TaskSpec, int], Backend]


def replay_factory(cassette_dir: Union[str, Path]) -> BackendFactory:
    """One fresh ReplayBackend per episode, reading <dir>/<task_id>.json."""
    cassette_dir = Path(cassette_dir)

    def factory(task: TaskSpec, trial: int) -> Backend:
        path = cassette_dir / f"{task.id}.json"
        if not path.exists():
            raise FileNotFoundError(f"cassette not found: {path}")
        return ReplayBackend(Cassette.load(path))

    return factory


def _run_one(task: TaskSpec, trial: int, factory: BackendFactory,
             config: PlannerConfig) -> EpisodeResult:
    try:
        backend = factory(task, trial)
        return run_episode(task, backend, replace(config, max_steps=task.step_cap))
    except Exception as exc:  # recorded, never aborts the suite
        return EpisodeResult(
            task_id=task.id,
            success=False,
            steps_executed=0,
            outcome="error",
            step_cap=task.step_cap,
            error=f"{type(exc).__name__}: {exc}",
        )


def run_suite(
    tasks: Sequence[TaskSpec],
    backend_factory: BackendFactory,
    config: Optional[PlannerConfig] = None,
    parallelism: int = 1,
    out_dir: Optional[Union[str, Path]] = None,
    backend_id: str = "replay",
) -> SuiteReport:
    """Run trials x tasks episodes and aggregate SR/AS per task."""
    config = config or PlannerConfig()
    jobs = [(task, trial) for task in tasks for trial in range(task.trials)]
    results: dict[tuple[str, int], EpisodeResult] = {}
    if parallelism <= 1:
        for task, trial in jobs:
            results[(task.id, trial)] = _run_one(task, trial, backend_factory, config)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = {
                (task.id, trial): pool.submit(_run_one, task, trial, backend_factory, config)
                for task, trial in jobs
            }
            for key, future in futures.items():
                results[key] = future.result()

    rows = []
    for task in tasks:
        task_results = [results[(task.id, t)] for t in range(task.trials)]
        sr, avg_steps = compute_metrics(task_results, task.step_cap)
        rows.append(
            TaskRow(
                task_id=task.id,
                instruction=task.instruction,
                difficulty=task.difficulty,
                trials=task.trials,
                step_cap=task.step_cap,
                sr=sr,
                avg_steps=avg_steps,
                outcomes=[r.outcome for r in task_results],
                errors=[r.error for r in task_results if r.error],
            )
        )
    report = SuiteReport(mode=config.state_mode.value, backend_id=backend_id, task_rows=rows)

    if out_dir is not None:
        out_dir = Path(out_dir)
        traces = out_dir / "traces"
        traces.mkdir(parents=True, exist_ok=True)
        for (task_id, trial), result in sorted(results.items()):
            doc = result.trace_document(config.state_mode)
            (traces / f"{task_id}_trial{trial}.json").write_text(
                json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
            )
        (out_dir / "report.json").write_text(
            json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        (out_dir / "report.txt").write_text(report.render_text(), encoding="utf-8")
    return report
