"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that the terminal summary prints.
"""

import json
import random
import time
from collections import Counter
from fractions import Fraction

import pytest

from conftest import ACCEPTANCE_LINES, query_line_and_steps
from viotbench.agent import Outcome, SessionConfig, run_batch
from viotbench.backends import (
    CorruptionConfig, EndpointBackend, FormatBreakerBackend, OBSERVATION_STOP, scripted_backend,
)
from viotbench.cli import main
from viotbench.dataset import (
    DatasetRecord, GenConfig, TEST, generate, is_interrelated, split, write_dataset,
)
from viotbench.evaluation import score
from viotbench.prompts import Query
from viotbench.react_format import (
    LENIENT, STRICT, Final, Step, ToolCall, Trace, parse_step, render_step,
)
from viotbench.tools import invoke

METRICS = ("decision", "tool", "input", "whole")


def record(n, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def traces(results):
    return [r.trace for r in results]


def oracle(records, registry, base, corruption=None, **kw):
    return lambda: scripted_backend(records, corruption, registry=registry, base=base, **kw)


@pytest.fixture(scope="module")
def five_hundred(world, registry):
    return generate(world, registry, cfg=GenConfig(per_tool_count=40, pipeline_count=30, seed=1))


def test_1_oracle_equivalence(world, registry):
    start = time.perf_counter()
    recs = generate(world, registry, cfg=GenConfig(per_tool_count=40, pipeline_count=30, seed=1))
    results = run_batch(oracle(recs, registry, world), registry, world, recs)
    rep = score(recs, traces(results))
    elapsed = time.perf_counter() - start
    tasks = {r.task for r in recs}
    vals = tuple(rep.overall.exact(m) for m in METRICS)
    ok = (len(recs) >= 500 and len(tasks) == 13 and vals == (1, 1, 1, 1) and elapsed < 30)
    record(1, ok, f"{len(recs)} records, {len(tasks)} tasks, metrics "
                  f"{[float(v) for v in vals]}, {elapsed:.1f}s")


def test_2_degenerate_baseline(world, registry, five_hundred):
    results = run_batch(FormatBreakerBackend, registry, world, five_hundred)
    rep = score(five_hundred, traces(results))
    vals = tuple(rep.overall.exact(m) for m in METRICS)
    outcomes = Counter(r.outcome for r in results)
    ok = vals == (0, 0, 0, 0) and outcomes == {Outcome.FORMAT_VIOLATION: len(five_hundred)}
    record(2, ok, f"breaker metrics {[float(v) for v in vals]}")


def test_3_metric_calibration(world, registry):
    recs = generate(world, registry, cfg=GenConfig(per_tool_count=700, pipeline_count=700, seed=3))
    c = CorruptionConfig(p_tool=0.30, rng_seed=17)
    results = run_batch(oracle(recs, registry, world, c), registry, world, recs)
    rep = score(recs, traces(results)).overall
    tool_steps = rep.tool_steps
    # independent recount: a sample is clean iff its trace replays gold verbatim
    clean = sum([s.action for s in r.trace.steps] == g.gold_actions
                for g, r in zip(recs, results))
    changed = sum(p.action.tool_name != g.tool_name
                  for g0, r in zip(recs, results)
                  for g, p in zip(g0.gold_steps, r.trace.steps))
    se = (0.3 * 0.7 / tool_steps) ** 0.5
    # expected whole: 0.7 per single-tool sample, 0.7^2 per pipeline sample
    n_pipe = sum(len(r.gold_steps) == 2 for r in recs)
    exp_whole = (0.7 * (len(recs) - n_pipe) + 0.49 * n_pipe) / len(recs)
    whole_se = (exp_whole * (1 - exp_whole) / len(recs)) ** 0.5
    ok = (tool_steps >= 10_000
          and abs(rep.acc_tool - 0.700) <= 0.015
          and rep.exact("decision") == 1 and rep.exact("input") == 1
          and rep.exact("whole") == Fraction(clean, len(recs))
          and rep.tool_hits == tool_steps - changed
          and abs(rep.acc_whole - exp_whole) <= 3 * whole_se)
    record(3, ok, f"{tool_steps} tool steps, acc_tool {rep.acc_tool:.4f} "
                  f"(0.700 +/- 0.015, 3 SE = {3 * se:.4f}), decision {rep.acc_decision:.4f}, "
                  f"input {rep.acc_input:.4f}, whole {rep.acc_whole:.4f} = {clean}/{len(recs)} "
                  f"recounted (expected {exp_whole:.4f})")


def test_4_hand_enumerated():
    face = ToolCall("FaceRecognition", "suspect_A.jpg, Cairo")
    scene, violence = ToolCall("SceneRecognition", "Cairo"), ToolCall("ViolenceDetection", "Cairo")
    gold = [DatasetRecord(Query("A", "find"), "human", (face,), "found"),
            DatasetRecord(Query("B", "anomaly"), "event", (scene, violence), "violent")]

    def tr(qid, acts):
        return Trace(qid, [Step(a, "o" if isinstance(a, ToolCall) else None) for a in acts],
                     [render_step(a) for a in acts])

    pred = [tr("A", [face, Final("found")]),
            tr("B", [scene, ToolCall("CrowdCounting", "Cairo"), Final("violent")])]
    vals = tuple(score(gold, pred).overall.exact(m) for m in METRICS)
    want = (Fraction(1), Fraction(2, 3), Fraction(1), Fraction(1, 2))
    record(4, vals == want, f"(decision, tool, input, whole) = {tuple(str(v) for v in vals)}")


def _fuzz(text, rng):
    def ws(lo=0):
        return "".join(rng.choice(" \t") for _ in range(rng.randint(lo, 3)))

    lines = []
    for ln in text.split("\n"):
        while rng.random() < 0.25:
            lines.append(ws())
        tokens = ln.split(" ")
        lines.append(ws() + "".join(t + ws(1) for t in tokens[:-1]) + tokens[-1] + ws())
    return "\n".join(lines)


def test_5_parser_robustness(five_hundred):
    rng = random.Random(5)
    pool = [a for r in five_hundred for a in r.gold_actions]
    actions = [rng.choice(pool) for _ in range(1000)]
    fuzz_ok = strict_ok = changed = 0
    for a in actions:
        canon = render_step(a)
        fuzzed = _fuzz(canon, rng)
        changed += fuzzed != canon
        fuzz_ok += parse_step(fuzzed, LENIENT) == a
        strict_ok += parse_step(canon, STRICT) == a and render_step(parse_step(canon)) == canon
    ok = fuzz_ok == strict_ok == 1000 and changed > 900
    record(5, ok, f"lenient fuzz {fuzz_ok}/1000 ({changed} perturbed), strict round-trip "
                  f"{strict_ok}/1000")


def test_6_gold_validity(world, registry, five_hundred):
    test_pool = generate(world, registry, cfg=GenConfig(38, 41, seed=1, pool=TEST))
    recs = five_hundred + test_pool
    results = run_batch(oracle(recs, registry, world), registry, world, recs, parallelism=4)
    good = 0
    for g, r in zip(recs, results):
        replayed = [invoke(registry, world, s.tool_name, s.tool_input).text for s in g.gold_steps]
        good += (r.outcome is Outcome.COMPLETED
                 and [s.action for s in r.trace.steps] == g.gold_actions
                 and [s.observation for s in r.trace.steps] == replayed + [None])
    record(6, good == len(recs), f"{good}/{len(recs)} records replay to gold")


def test_7_split_protocol(world, registry):
    recs = generate(world, registry, cfg=GenConfig(per_tool_count=400, pipeline_count=300, seed=7))
    train, val = split(recs, (49, 1), seed=7)
    again = split(recs, (49, 1), seed=7)
    tools_in_val = {r.task for r in val} & set(registry.names)
    ok = (len(recs) == 5000 and (len(train), len(val)) == (4900, 100)
          and len(tools_in_val) == 11
          and again == (train, val)
          and not {r.query.id for r in train} & {r.query.id for r in val})
    record(7, ok, f"{len(recs)} -> {len(train)}/{len(val)}, "
                  f"{len(tools_in_val)}/11 tools in val, "
                  f"deterministic={again == (train, val)}")


def test_8_interrelated_coverage(world, registry):
    recs = generate(world, registry, cfg=GenConfig(per_tool_count=20, pipeline_count=100, seed=8))
    pipe_lengths = {len(r.gold_actions) for r in recs if is_interrelated(r.task)}
    second_stage = lambda rec, t: len(rec.gold_steps) > 1 and t == 1
    c = CorruptionConfig(p_tool=0.5, rng_seed=8)
    results = run_batch(oracle(recs, registry, world, c, corrupt_where=second_stage),
                        registry, world, recs)
    rep = score(recs, traces(results))
    single, inter = rep.by_group["single"], rep.by_group["interrelated"]
    # half the second stages flip, so 1 - 0.5 / 2 of interrelated tool steps stay right
    n_second = sum(len(r.gold_steps) > 1 for r in recs)
    expected, se = 0.75, (0.25 / n_second) ** 0.5 / 2
    ok = (pipe_lengths == {3} and single.as_tuple() == (1.0, 1.0, 1.0, 1.0)
          and inter.acc_tool < 1.0 and inter.acc_decision == inter.acc_input == 1.0
          and abs(inter.acc_tool - expected) <= 3 * se)
    record(8, ok, f"pipeline trace lengths {sorted(pipe_lengths)}, single "
                  f"{single.as_tuple()}, interrelated acc_tool {inter.acc_tool:.4f}")


def test_9_endpoint_conformance(tmp_path, stub_endpoint, demo, registry):
    recs = generate(demo, registry, cfg=GenConfig(per_tool_count=3, pipeline_count=3, seed=9))
    by_line = {}
    for r in recs:
        line = f"Human: {r.query.text}" + (f" [media: {r.query.media_ref}]"
                                           if r.query.media_ref else "")
        by_line.setdefault(line, []).append(r)
    unique = sorted(l for l, rs in by_line.items() if len(rs) == 1)
    faulty = set(random.Random(9).sample(unique, 4))
    k = len(faulty)
    bad_schema = []

    def handler(payload):
        if set(payload) != {"prompt", "stop", "max_tokens"} or OBSERVATION_STOP not in payload["stop"]:
            bad_schema.append(payload)
        line, t = query_line_and_steps(payload["prompt"])
        if line in faulty:
            return 500, b'{"error": "injected"}'
        gold = by_line[line][0].gold_actions
        text = render_step(gold[min(t, len(gold) - 1)])
        return 200, json.dumps({"text": text + "\nObservation: hallucinated"}).encode()

    stub = stub_endpoint(handler)
    backend = lambda: EndpointBackend(stub.url, retries=0, backoff=0.0)
    results = run_batch(backend, registry, demo, recs, SessionConfig(), parallelism=4)
    outcomes = Counter(r.outcome for r in results)
    faults = sum(r.outcome is Outcome.FORMAT_VIOLATION and r.is_fault for r in results)
    clean = [r for r, g in zip(results, recs) if r.outcome is Outcome.COMPLETED
             and [s.action for s in r.trace.steps] == g.gold_actions]

    data = tmp_path / "d.jsonl"
    write_dataset(recs, data)
    rc = main(["run", "--dataset", str(data), "--traces-out", str(tmp_path / "t.jsonl"),
               "--kb", "demo", "--backend", "endpoint", "--endpoint", stub.url,
               "--retries", "0", "--backoff", "0"])
    faulty.clear()
    rc_clean = main(["run", "--dataset", str(data), "--traces-out", str(tmp_path / "u.jsonl"),
                     "--kb", "demo", "--backend", "endpoint", "--endpoint", stub.url,
                     "--retries", "0"])
    ok = (not bad_schema and outcomes[Outcome.FORMAT_VIOLATION] == k and faults == k
          and len(clean) == len(recs) - k and rc != 0 and rc_clean == 0)
    record(9, ok, f"{len(recs)} records, {k} faulty -> {outcomes[Outcome.FORMAT_VIOLATION]} "
                  f"format-violation outcomes, {len(clean)} completed as gold, CLI exit {rc} "
                  f"(fault-free rerun exit {rc_clean})")
