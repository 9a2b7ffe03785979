"""Command-line verbs: run, validate, bench, report."""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

from . import bench as benchmod
from .config import ConfigError, load_settings
from .gateway import BackendUnavailable, FixtureMiss
from .pipeline import PipelineOptions, run_pipeline
from .planner import RepositoryError, TaskRepository
from .registry import TASK_KINDS, UnknownTaskKind
from .report import TraceSchemaError, load_trace, render_html, render_text
from .ssparser import CLEAN, FALLBACK, REPAIRED, validate_and_repair
from .values import ImageRef

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_ERROR = 3
VERDICT_EXIT = {CLEAN: 0, REPAIRED: 1, FALLBACK: 2}

_SIZED_ID = re.compile(r"^(?P<id>.+):(?P<w>[0-9]+)x(?P<h>[0-9]+)$")


def parse_image(text: str) -> ImageRef:
    """``path/to/file.jpg`` (size read from the file) or ``ID:WIDTHxHEIGHT``."""
    m = _SIZED_ID.match(text)
    if m:
        return ImageRef(m["id"], int(m["w"]), int(m["h"]))
    return benchmod._image(text, None)


def _pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (falls back to $PLANSCRIPT_CONFIG)")
    p.add_argument("--task", choices=TASK_KINDS)
    p.add_argument("--backend", choices=("fixture", "http", "record"), help="override every backend's impl")
    p.add_argument("--fixtures", help="directory holding fixture stores")
    p.add_argument("--no-ssparser", dest="use_ssparser", action="store_false", default=None)
    p.add_argument("--no-verifier", dest="use_verifier", action="store_false", default=None)
    p.add_argument("--no-ensemble", dest="use_ensemble", action="store_false", default=None)
    p.add_argument("--parallel", action="store_true", default=None)
    p.add_argument("--strict", action="store_true", default=None)
    p.add_argument("--trace", help="write the JSON trace here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planscript", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="answer one question")
    run.add_argument("question")
    run.add_argument("images", nargs="+", help="image path or ID:WIDTHxHEIGHT")
    run.add_argument("--choice", action="append", dest="choices", help="answer choice (video)")
    _pipeline_flags(run)

    val = sub.add_parser("validate", help="run the SS-parser on a script file")
    val.add_argument("script")
    val.add_argument("question")
    val.add_argument("--task", choices=TASK_KINDS, default="gqa")

    ben = sub.add_parser("bench", help="score a JSONL sample file")
    ben.add_argument("samples")
    ben.add_argument("--workers", type=int)
    ben.add_argument("--ablation", action="store_true", help="run the four-configuration matrix")
    ben.add_argument("--out", help="write the RunReport JSON here")
    _pipeline_flags(ben)

    rep = sub.add_parser("report", help="render a trace file")
    rep.add_argument("trace_file")
    rep.add_argument("--html", action="store_true")
    rep.add_argument("--out")
    return parser


def _settings(args):
    overrides = {
        "task": args.task, "impl": args.backend, "fixtures": args.fixtures,
        "use_ssparser": args.use_ssparser, "use_verifier": args.use_verifier,
        "use_ensemble": args.use_ensemble, "parallel": args.parallel, "strict": args.strict,
        "workers": getattr(args, "workers", None),
    }
    return load_settings(args.config, overrides)


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text, "utf-8")


def cmd_run(args, out, err) -> int:
    settings = _settings(args)
    repo = TaskRepository.load(settings.repository)
    images = [parse_image(i) for i in args.images]
    options = PipelineOptions(settings.use_ssparser, settings.use_verifier, settings.parallel)
    result = run_pipeline(args.question, images, settings.gateway(), repo, settings.task, options, args.choices)
    _write(args.trace, json.dumps(result.to_json(), indent=2) + "\n")
    if not result.ok:
        print(f"error: {result.execution.error}", file=err)
        return EXIT_FAILED
    print(result.answer, file=out)
    return EXIT_OK


def cmd_validate(args, out, err) -> int:
    try:
        source = Path(args.script).read_text("utf-8")
    except OSError as exc:
        print(f"error: cannot read {args.script}: {exc}", file=err)
        return EXIT_ERROR
    outcome = validate_and_repair(source, args.question, task_kind=args.task)
    print(outcome.dumps(), file=out)
    return VERDICT_EXIT[outcome.verdict]


def cmd_bench(args, out, err) -> int:
    settings = _settings(args)
    samples = benchmod.load_samples(args.samples)
    repo = TaskRepository.load(settings.repository)
    if args.ablation:
        reports = benchmod.run_ablation(samples, settings, repo)
        for name, report in reports.items():
            print(f"== {name}", file=out)
            print(report.summary(), file=out)
        payload = {"schema_version": benchmod.REPORT_SCHEMA_VERSION,
                   "ablation": {n: r.to_json() for n, r in reports.items()}}
        _write(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return EXIT_OK
    report = benchmod.run_bench(samples, settings, repo)
    print(report.summary(), file=out)
    _write(args.out, report.dumps() + "\n")
    return EXIT_OK


def cmd_report(args, out, err) -> int:
    trace = load_trace(args.trace_file)
    text = render_html(trace) if args.html else render_text(trace)
    if args.out:
        _write(args.out, text)
    else:
        out.write(text)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "bench": cmd_bench, "report": cmd_report}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, stream=err)
    try:
        return COMMANDS[args.command](args, out, err)
    except FixtureMiss as exc:
        print(f"error: fixture miss: {exc}", file=err)
        return EXIT_ERROR
    except benchmod.BenchAborted as exc:
        print(f"error: bench aborted: {exc}", file=err)
        return EXIT_ERROR
    except BackendUnavailable as exc:
        print(f"error: backend unavailable: {exc}", file=err)
        return EXIT_ERROR
    except (ConfigError, UnknownTaskKind, RepositoryError, benchmod.SampleError, TraceSchemaError, ValueError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
