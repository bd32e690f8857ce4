"""Command-line entry points: train, eval, report, replay."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import ConfigurationError, MockFnError
from .harness import load_config, replay, report_from_log, run
from .trainer import RefinementPolicy


def _apply_overrides(config, args):
    updates = {}
    if getattr(args, "context_length", None) is not None:
        updates["context_length_limit"] = args.context_length
    if getattr(args, "policy", None) is not None:
        updates["refinement_policy"] = RefinementPolicy(args.policy)
    if getattr(args, "script", None) is not None:
        updates["script_enabled"] = args.script == "on"
    if getattr(args, "rag", None) is not None:
        updates["rag_path"] = Path(args.rag)
    if getattr(args, "output_dir", None) is not None:
        updates["output_dir"] = Path(args.output_dir)
    if updates:
        config = dataclasses.replace(config, **updates)
    return config


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", required=True, help="run configuration JSON document")
    parser.add_argument("--context-length", type=int, default=None,
                        help="override the invocation limit kept in memory")
    parser.add_argument("--policy", choices=["replace", "compress"], default=None,
                        help="override the memory refinement policy")
    parser.add_argument("--script", choices=["on", "off"], default=None,
                        help="enable or disable substitution-script generation")
    parser.add_argument("--rag", default=None, metavar="PATH",
                        help="RAG material JSON to inject before any invocation")
    parser.add_argument("--output-dir", default=None, help="override the artifact directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mockfn",
        description="Train, evaluate and replay model-role-played functions.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    train_cmd = commands.add_parser(
        "train", help="run a training session followed by evaluation"
    )
    _add_common(train_cmd)

    eval_cmd = commands.add_parser("eval", help="evaluate only, with a frozen context")
    _add_common(eval_cmd)
    eval_cmd.add_argument("--memory", default=None, metavar="PATH",
                          help="memory snapshot JSON produced by an earlier train run")

    report_cmd = commands.add_parser("report", help="token and cost report from a log")
    report_cmd.add_argument("--config", required=True)
    report_cmd.add_argument("--log", required=True, help="operations JSON-lines file")
    report_cmd.add_argument("--out", default=None, help="write the report to this path")

    replay_cmd = commands.add_parser("replay", help="re-run a recorded log through the stub")
    replay_cmd.add_argument("--config", required=True)
    replay_cmd.add_argument("--log", required=True, help="operations JSON-lines file")
    replay_cmd.add_argument("--eval-only", action="store_true",
                            help="the log came from an eval run, not a train run")
    replay_cmd.add_argument("--output-dir", default=None)
    return parser


def _print_result(result) -> None:
    if result.metrics is not None:
        print("metrics: " + json.dumps(result.metrics.to_dict()))
    if result.training is not None:
        print(
            f"training: {len(result.training.entries)} entries, "
            f"{len(result.training.reflections)} reflections, "
            f"final memory size {result.training.final_memory_size}"
        )
    for name, path in result.artifacts.items():
        print(f"{name}: {path}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command == "train":
            config = _apply_overrides(config, args)
            result = run(config, do_train=True, do_eval=True)
            _print_result(result)
        elif args.command == "eval":
            config = _apply_overrides(config, args)
            memory = Path(args.memory) if args.memory else None
            result = run(config, do_train=False, do_eval=True, memory_path=memory)
            _print_result(result)
        elif args.command == "report":
            report = report_from_log(args.log, config.backend.profile)
            text = json.dumps(report, indent=2)
            if args.out:
                Path(args.out).write_text(text + "\n", encoding="utf-8")
            print(text)
        elif args.command == "replay":
            output_dir = Path(args.output_dir) if args.output_dir else None
            result = replay(config, args.log, output_dir=output_dir,
                            do_train=not args.eval_only)
            _print_result(result)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except MockFnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
