"""Command line entry point: ``viotbench gen|run|score|repl``.

Settings come from an optional JSON config file (``--config``) and are
overridden by flags. A config file either maps subcommand names to option
dicts (``{"run": {"parallel": 4}}``) or is a manifest written by a previous
run, in which case that run's settings are replayed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .agent import ABORT, RETRY_ONCE, SessionConfig, run_batch, run_session
from .backends import (
    CorruptionConfig, DemoBackend, EndpointBackend, FormatBreakerBackend, scripted_backend,
)
from .dataset import GenConfig, export_sft, generate, read_dataset, split, write_dataset
from .evaluation import ScoringError, render_report, score
from .knowledge import KnowledgeBaseError, default_base, demo_base, load
from .prompts import PROMPT_VERSION, Query
from .react_format import (
    LENIENT, STRICT, Final, TraceFileError, read_trace_file, render_step, write_trace_file,
)
from .tools import canonical_registry

SCHEMA_VERSION = "1"
log = logging.getLogger("viotbench")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _load_base(spec: str | None):
    if spec in (None, "", "default"):
        return default_base()
    if spec == "demo":
        return demo_base()
    return load(spec)


def _write_manifest(path: Path, command: str, args, inputs: dict, outputs: dict,
                    seeds: dict, started: str) -> None:
    config = {k: v for k, v in vars(args).items()
              if k not in ("command", "config", "func", "verbose")}
    manifest = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": inputs,
        "outputs": outputs,
        "registry_version": canonical_registry().version,
        "prompt_version": PROMPT_VERSION,
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "started_at": started,
        "finished_at": _now(),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# gen


def cmd_gen(args, parser) -> int:
    if not args.out:
        parser.error("gen: --out is required")
    try:
        ratio = tuple(int(x) for x in args.split_ratio.split(":"))
        if len(ratio) != 2 or min(ratio) <= 0:
            raise ValueError
    except ValueError:
        parser.error(f"gen: bad --split-ratio {args.split_ratio!r} (expected e.g. 49:1)")
    started = _now()
    registry = canonical_registry()
    try:
        base = _load_base(args.kb)
    except (KnowledgeBaseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = GenConfig(args.per_tool, args.pipelines, args.seed, ratio, args.hit_rate)
    try:
        records = generate(base, registry, cfg=cfg)
        test = []
        if args.test_per_tool or args.test_pipelines:
            tcfg = GenConfig(args.test_per_tool, args.test_pipelines, args.seed, ratio,
                             args.hit_rate, pool="test")
            test = generate(base, registry, cfg=tcfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    train, val = split(records, ratio, args.seed)
    files = {"train": out / "train.jsonl", "val": out / "val.jsonl", "test": out / "test.jsonl"}
    write_dataset(train, files["train"])
    write_dataset(val, files["val"])
    write_dataset(test, files["test"])
    outputs = {k: str(v) for k, v in files.items()}
    if args.sft:
        for name, recs in (("sft_train", train), ("sft_val", val)):
            p = out / f"{name}.jsonl"
            export_sft(recs, p, registry, base)
            outputs[name] = str(p)
    _write_manifest(out / "manifest.json", "gen", args, {"kb": args.kb or "default"},
                    outputs, {"seed": args.seed}, started)
    print(f"generated {len(records)} records ({len(train)} train / {len(val)} val) "
          f"and {len(test)} test records in {out}")
    return 0


# --------------------------------------------------------------------------
# run


def _backend_factory(args, registry, base, gold):
    if args.backend == "scripted":
        corruption = CorruptionConfig(args.corrupt_decision, args.corrupt_tool,
                                      args.corrupt_input, args.corrupt_final, args.corrupt_seed)
        return lambda: scripted_backend(gold, corruption, registry=registry, base=base)
    if args.backend == "breaker":
        return FormatBreakerBackend
    if args.backend == "endpoint":
        url = args.endpoint or os.environ.get("VIOT_ENDPOINT")
        if not url:
            raise ValueError("endpoint backend needs --endpoint or VIOT_ENDPOINT")
        return lambda: EndpointBackend(url, timeout=args.timeout, retries=args.retries,
                                       backoff=args.backoff)
    if args.backend == "demo":
        return lambda: DemoBackend(registry, base)
    raise ValueError(f"unknown backend {args.backend!r}")


def cmd_run(args, parser) -> int:
    if not args.dataset or not args.traces_out:
        parser.error("run: --dataset and --traces-out are required")
    if args.parallel < 1:
        parser.error("run: --parallel must be >= 1")
    started = _now()
    registry = canonical_registry()
    try:
        cfg = SessionConfig(args.max_steps, args.parse_mode, args.on_violation)
        CorruptionConfig(args.corrupt_decision, args.corrupt_tool,
                         args.corrupt_input, args.corrupt_final)
    except ValueError as exc:
        parser.error(f"run: {exc}")
    try:
        base = _load_base(args.kb)
        gold = read_dataset(args.dataset)
        factory = _backend_factory(args, registry, base, gold)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    results = run_batch(factory, registry, base, gold, cfg, args.parallel)
    traces_out = Path(args.traces_out)
    write_trace_file([r.trace for r in results], traces_out)
    outcomes = Counter(r.outcome.value for r in results)
    faults = [r for r in results if r.is_fault]
    _write_manifest(traces_out.with_name(traces_out.name + ".manifest.json"), "run", args,
                    {"dataset": args.dataset, "kb": args.kb or "default"},
                    {"traces": str(traces_out)}, {"corrupt_seed": args.corrupt_seed}, started)
    summary = ", ".join(f"{k}={v}" for k, v in sorted(outcomes.items()))
    print(f"ran {len(results)} sessions: {summary}")
    if faults:
        print(f"error: {len(faults)} of {len(results)} records hit backend errors", file=sys.stderr)
        for r in faults[:5]:
            print(f"  {r.trace.query_id}: {r.error}", file=sys.stderr)
        return 1
    return 0


# --------------------------------------------------------------------------
# score


def cmd_score(args, parser) -> int:
    if not args.gold or not args.pred:
        parser.error("score: --gold and --pred are required")
    if args.parallel < 1:
        parser.error("score: --parallel must be >= 1")
    try:
        gold = read_dataset(args.gold)
        pred = read_trace_file(args.pred)
        report = score(gold, pred, lenient=args.lenient, match_final_text=args.match_final_text,
                       parallelism=args.parallel)
    except (ScoringError, TraceFileError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = render_report(report, args.format)
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    o = report.overall
    print(f"decision={o.acc_decision:.4f} tool={o.acc_tool:.4f} input={o.acc_input:.4f} "
          f"whole={o.acc_whole:.4f} samples={o.samples}",
          file=sys.stderr if not args.report else sys.stdout)
    return 0


# --------------------------------------------------------------------------
# repl


def cmd_repl(args, parser, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    registry = canonical_registry()
    try:
        base = _load_base(args.kb)
    except (KnowledgeBaseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.backend == "endpoint":
        backend = EndpointBackend.from_env(args.endpoint, timeout=args.timeout,
                                           retries=args.retries)
    else:
        backend = DemoBackend(registry, base)
    cfg = SessionConfig(args.max_steps, args.parse_mode)
    n = 0
    while True:
        stdout.write("> ")
        stdout.flush()
        line = stdin.readline()
        if not line:
            return 0
        text = line.strip()
        if not text:
            continue
        if text == ":quit":
            return 0
        n += 1
        result = run_session(backend, registry, base, Query(f"repl-{n}", text), cfg)
        for step in result.trace.steps:
            stdout.write(render_step(step.action, step.observation) + "\n")
        final = result.trace.final
        if isinstance(final, Final):
            stdout.write(f"Answer: {final.answer}\n")
        else:
            detail = result.error or (result.violation.reason.value if result.violation else "")
            stdout.write(f"[{result.outcome.value}] {detail}\n")


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="viotbench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version",
                   version=(f"viotbench {__version__} (tool registry "
                            f"{canonical_registry().version}, prompt {PROMPT_VERSION}, "
                            f"schema {SCHEMA_VERSION})"))
    p.add_argument("--config", help="JSON config file or run manifest")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate train/val/test datasets and SFT pairs")
    g.add_argument("--out", help="output directory")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--per-tool", type=int, default=150)
    g.add_argument("--pipelines", type=int, default=175)
    g.add_argument("--test-per-tool", type=int, default=38)
    g.add_argument("--test-pipelines", type=int, default=41)
    g.add_argument("--hit-rate", type=float, default=0.5)
    g.add_argument("--split-ratio", default="49:1")
    g.add_argument("--kb", help="fixture file, 'default' or 'demo'")
    g.add_argument("--sft", action=argparse.BooleanOptionalAction, default=True)
    g.set_defaults(func=cmd_gen)

    def session_flags(sp):
        sp.add_argument("--kb", help="fixture file, 'default' or 'demo'")
        sp.add_argument("--max-steps", type=int, default=5)
        sp.add_argument("--parse-mode", choices=(LENIENT, STRICT), default=LENIENT)
        sp.add_argument("--endpoint", help="completion endpoint URL (else $VIOT_ENDPOINT)")
        sp.add_argument("--timeout", type=float, default=30.0)
        sp.add_argument("--retries", type=int, default=2)

    r = sub.add_parser("run", help="run the agent over a dataset")
    r.add_argument("--dataset")
    r.add_argument("--traces-out")
    r.add_argument("--backend", choices=("scripted", "breaker", "endpoint", "demo"),
                   default="scripted")
    r.add_argument("--corrupt-decision", type=float, default=0.0)
    r.add_argument("--corrupt-tool", type=float, default=0.0)
    r.add_argument("--corrupt-input", type=float, default=0.0)
    r.add_argument("--corrupt-final", type=float, default=0.0)
    r.add_argument("--corrupt-seed", type=int, default=0)
    r.add_argument("--parallel", type=int, default=1)
    r.add_argument("--on-violation", choices=(ABORT, RETRY_ONCE), default=ABORT)
    r.add_argument("--backoff", type=float, default=0.5)
    session_flags(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("score", help="score traces against gold records")
    s.add_argument("--gold")
    s.add_argument("--pred")
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--lenient", dest="lenient", action="store_true", default=True)
    mode.add_argument("--strict", dest="lenient", action="store_false")
    s.add_argument("--report", help="write the report here instead of stdout")
    s.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    s.add_argument("--match-final-text", action="store_true")
    s.add_argument("--parallel", type=int, default=1)
    s.set_defaults(func=cmd_score)

    q = sub.add_parser("repl", help="ask questions interactively")
    q.add_argument("--backend", choices=("demo", "endpoint"), default="demo")
    session_flags(q)
    q.set_defaults(func=cmd_repl)
    return p


def _apply_config(parser: argparse.ArgumentParser, path: str) -> None:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {path}: {exc}")
    if "command" in data and "config" in data:
        data = {data["command"]: data["config"]}
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, options in data.items():
        sp = subparsers.choices.get(name)
        if sp is None or not isinstance(options, dict):
            parser.error(f"config: unknown section {name!r}")
        known = {a.dest for a in sp._actions}
        unknown = set(options) - known
        if unknown:
            parser.error(f"config [{name}]: unknown options {sorted(unknown)}")
        sp.set_defaults(**options)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        _apply_config(parser, known.config)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args, parser)


if __name__ == "__main__":
    sys.exit(main())
