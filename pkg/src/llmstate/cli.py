"""Operator entry point.

Verbs: ``run`` one task, ``suite`` for the full benchmark, ``record`` a live
run into a cassette, ``replay`` a task strictly from a cassette, ``inspect``
a trace file.  Replay never touches the network: the replay backend has no
transport.  All artifacts (traces, reports, cassettes) land under --out.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import bench
from .llmclient import AuthError, Cassette, LiveBackend, RecordBackend, ReplayBackend
from .planner import PlannerConfig, run_episode
from .staterep import StateMode

EXIT_OK = 0
EXIT_TASK_FAILED = 1
EXIT_CONFIG = 2


class CliError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llmstate")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--mode", choices=[m.value for m in StateMode], default="full")
        p.add_argument("--out", default="out", help="artifact output directory")
        p.add_argument("--format", choices=["text", "structured"], default="text")
        p.add_argument("--max-llm-calls", type=int, default=150)
        p.add_argument("--horizon", type=int, default=20,
                       help="step budget slot shown to the policy prompt")

    run_p = sub.add_parser("run", help="run one task")
    run_p.add_argument("--task", required=True)
    run_p.add_argument("--backend", choices=["live", "replay", "record"], default="replay")
    run_p.add_argument("--cassette", help="cassette file (replay/record)")
    run_p.add_argument("--strict", action="store_true",
                       help="exit nonzero when the task does not reach its goal")
    common(run_p)

    replay_p = sub.add_parser("replay", help="run one task from a cassette, no network")
    replay_p.add_argument("--task", required=True)
    replay_p.add_argument("--cassette", required=True)
    replay_p.add_argument("--strict", action="store_true")
    common(replay_p)

    record_p = sub.add_parser("record", help="run one task live, writing a cassette")
    record_p.add_argument("--task", required=True)
    record_p.add_argument("--cassette", required=True)
    record_p.add_argument("--strict", action="store_true")
    common(record_p)

    suite_p = sub.add_parser("suite", help="run a task suite and report SR/AS")
    suite_p.add_argument("--suite", help="suite manifest (default: bundled)")
    suite_p.add_argument("--backend", choices=["live", "replay"], default="replay")
    suite_p.add_argument("--cassette", help="cassette directory (default: bundled)")
    suite_p.add_argument("--parallel", type=int, default=1)
    common(suite_p)

    inspect_p = sub.add_parser("inspect", help="pretty-print an episode trace")
    inspect_p.add_argument("--trace", required=True)
    inspect_p.add_argument("--full-prompts", action="store_true",
                           help="print complete prompts instead of summaries")
    return parser


def _config(args: argparse.Namespace) -> PlannerConfig:
    return PlannerConfig(
        state_mode=StateMode(args.mode),
        plan_horizon_budget=args.horizon,
        max_llm_calls=args.max_llm_calls,
    )


def _single_backend(args: argparse.Namespace, backend_kind: str):
    if backend_kind == "replay":
        if not args.cassette:
            raise CliError("replay needs --cassette")
        path = Path(args.cassette)
        if not path.exists():
            raise CliError(f"cassette file does not exist: {path}")
        return ReplayBackend(Cassette.load(path)), f"replay:{path.name}"
    try:
        live = LiveBackend()
    except AuthError as exc:
        raise CliError(f"live backend unavailable: {exc}") from exc
    if backend_kind == "record":
        if not args.cassette:
            raise CliError("record needs --cassette")
        return RecordBackend(live, path=args.cassette), f"record:{live.model_name}"
    return live, f"live:{live.model_name}"


def _cmd_single(args: argparse.Namespace, backend_kind: str) -> int:
    task = bench.load_task(args.task)
    backend, backend_id = _single_backend(args, backend_kind)
    config = replace(_config(args), max_steps=task.step_cap)
    result = run_episode(task, backend, config)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / f"{task.id}.trace.json"
    trace_path.write_text(
        json.dumps(result.trace_document(config.state_mode), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )

    if args.format == "structured":
        print(json.dumps({
            "task": task.id,
            "success": result.success,
            "steps": result.steps_executed,
            "outcome": result.outcome,
            "llm_calls": result.llm_calls,
            "backend": backend_id,
            "trace": str(trace_path),
        }, indent=2))
    else:
        print(
            f"task={task.id} success={result.success} steps={result.steps_executed} "
            f"outcome={result.outcome} llm_calls={result.llm_calls}"
        )
        print(f"trace written to {trace_path}")
    if args.strict and not result.success:
        return EXIT_TASK_FAILED
    return EXIT_OK


def _cmd_suite(args: argparse.Namespace) -> int:
    suite_path = Path(args.suite) if args.suite else bench.bundled_suite_path()
    if not suite_path.exists():
        raise CliError(f"suite manifest does not exist: {suite_path}")
    tasks = bench.load_suite(suite_path)
    if args.backend == "replay":
        cassette_dir = Path(args.cassette) if args.cassette else bench.bundled_cassette_dir()
        if not cassette_dir.exists():
            raise CliError(f"cassette directory does not exist: {cassette_dir}")
        factory = bench.replay_factory(cassette_dir)
        backend_id = f"replay:{cassette_dir.name}"
    else:
        try:
            live = LiveBackend()
        except AuthError as exc:
            raise CliError(f"live backend unavailable: {exc}") from exc
        factory = lambda task, trial: live  # noqa: E731 - shared live client
        backend_id = f"live:{live.model_name}"

    report = bench.run_suite(
        tasks,
        factory,
        config=_config(args),
        parallelism=args.parallel,
        out_dir=args.out,
        backend_id=backend_id,
    )
    if args.format == "structured":
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(report.render_text(), end="")
    return EXIT_OK


def _cmd_inspect(args: argparse.Namespace) -> int:
    path = Path(args.trace)
    if not path.exists():
        raise CliError(f"trace file does not exist: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    print(f"task={doc.get('task_id')} mode={doc.get('mode')} outcome={doc.get('outcome')} "
          f"success={doc.get('success')} steps={doc.get('steps_executed')}")
    for rnd in doc.get("rounds", []):
        print(f"\n=== round {rnd.get('round')} ===")
        for call in rnd.get("calls", []):
            print(f"--- {call['role']} ---")
            if args.full_prompts:
                print(call["prompt"])
            print(f"response:\n{call['response']}")
        if rnd.get("state"):
            print(f"state:\n{rnd['state']}")
        for act in rnd.get("actions", []):
            print(f"  {act['record']}")
    return EXIT_OK


def dispatch(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.verb == "run":
            return _cmd_single(args, args.backend)
        if args.verb == "replay":
            return _cmd_single(args, "replay")
        if args.verb == "record":
            return _cmd_single(args, "record")
        if args.verb == "suite":
            return _cmd_suite(args)
        if args.verb == "inspect":
            return _cmd_inspect(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


def main() -> None:  # pragma: no cover - console entry point
    sys.exit(dispatch())
