import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from viotbench.dataset import DatasetRecord
from viotbench.evaluation import (
    Metrics, ScoringError, judge_step, parse_csv_report, parse_markdown_report, render_report,
    score,
)
from viotbench.prompts import Query
from viotbench.react_format import (
    Final, FormatViolation, Step, ToolCall, Trace, ViolationReason, render_step,
)

FACE = ToolCall("FaceRecognition", "suspect_A.jpg, Cairo")


def rec(qid, steps, final="done"):
    return DatasetRecord(Query(qid, "q"), "event", tuple(steps), final)


def trace(qid, actions):
    """A trace of ``actions``, cut after the first final."""
    acts = []
    for a in actions:
        acts.append(a)
        if isinstance(a, Final):
            break
    steps = [Step(a, "obs" if isinstance(a, ToolCall) else None) for a in acts]
    return Trace(qid, steps, [render_step(a) for a in acts])


class TestJudge:
    def test_identical(self):
        j = judge_step(FACE, FACE)
        assert (j.decision_correct, j.tool_correct, j.input_correct) == (True, True, True)

    def test_component_independence(self):
        j = judge_step(FACE, ToolCall("PersonReidentification", "suspect_A.jpg, Cairo"))
        assert (j.decision_correct, j.tool_correct, j.input_correct) == (True, False, True)

    def test_lenient_input(self):
        pred = ToolCall("FaceRecognition", "suspect_A.jpg, cairo")
        assert judge_step(FACE, pred, lenient=True).input_correct is True
        assert judge_step(FACE, pred, lenient=False).input_correct is False

    def test_lenient_tool_case(self):
        pred = ToolCall("facerecognition", FACE.tool_input)
        assert judge_step(FACE, pred, lenient=True).tool_correct
        assert not judge_step(FACE, pred, lenient=False).tool_correct

    def test_violation(self):
        v = FormatViolation(0, "x", ViolationReason.MISSING_THOUGHT_LINE)
        j = judge_step(FACE, v)
        assert (j.decision_correct, j.tool_correct, j.input_correct) == (False, False, False)
        assert judge_step(Final("a"), v).tool_correct is None

    def test_final_has_no_tool_components(self):
        j = judge_step(Final("a"), Final("b"))
        assert j.decision_correct and j.tool_correct is None and j.input_correct is None
        assert judge_step(Final("a"), FACE).decision_correct is False

    def test_match_final_text(self):
        assert not judge_step(Final("a"), Final("b"), match_final_text=True).decision_correct


def worked_example():
    scene, violence = ToolCall("SceneRecognition", "Cairo"), ToolCall("ViolenceDetection", "Cairo")
    gold = [rec("A", [FACE]), rec("B", [scene, violence])]
    pred = [trace("A", [FACE, Final("x")]),
            trace("B", [scene, ToolCall("FireSmokeDetection", "Cairo"), Final("y")])]
    return gold, pred


def test_worked_example_exact():
    gold, pred = worked_example()
    r = score(gold, pred)
    assert tuple(r.overall.exact(m) for m in ("decision", "tool", "input", "whole")) == \
        (Fraction(1), Fraction(2, 3), Fraction(1), Fraction(1, 2))
    assert r.counts == {"samples": 2, "steps": 5, "tool_steps": 3}
    assert r.by_group["interrelated"].exact("tool") == Fraction(1, 2)
    assert r.by_group["single"].as_tuple() == (1.0, 1.0, 1.0, 1.0)


def test_worked_example_renders_6667():
    gold, pred = worked_example()
    md = parse_markdown_report(render_report(score(gold, pred), "markdown"))
    assert md[("all", "tool", "all")] == "66.67"
    assert md[("all", "whole", "all")] == "50.00"


def test_empty_report():
    out = render_report(score([], []))
    assert out.count("\n") == 2 and "All Responses Tool" in out
    assert render_report(score([], []), "csv") == "group,metric,tool,value\n"


def test_all_ones(small_dataset):
    preds = [trace(r.query.id, r.gold_actions) for r in small_dataset]
    r = score(small_dataset, preds)
    assert r.as_tuple() == (1.0, 1.0, 1.0, 1.0)
    values = set(parse_markdown_report(render_report(r)).values())
    assert values == {"100.00"}


def test_csv_and_markdown_agree(small_dataset):
    rng = random.Random(0)
    preds = []
    for r in small_dataset:
        acts = list(r.gold_actions)
        if rng.random() < 0.4:
            acts[0] = ToolCall("CrowdCounting", "Tokyo")
        preds.append(trace(r.query.id, acts[: rng.randint(1, len(acts))]))
    rep = score(small_dataset, preds)
    assert parse_markdown_report(render_report(rep, "markdown")) == \
        parse_csv_report(render_report(rep, "csv"))


def test_render_is_deterministic(small_dataset):
    preds = [trace(r.query.id, r.gold_actions) for r in small_dataset]
    assert render_report(score(small_dataset, preds)) == render_report(score(small_dataset, preds))


def test_missing_trace_and_extra_steps():
    gold = [rec("A", [FACE]), rec("B", [FACE])]
    pred = [trace("A", [FACE, FACE, Final("y")])]
    r = score(gold, pred)
    # A: tool step right, second step decides Yes where gold stops; B: nothing
    assert r.overall.exact("decision") == Fraction(1, 4)
    assert r.overall.exact("tool") == Fraction(1, 2)
    assert r.acc_whole == 0.0


def test_whole_requires_a_final():
    r = score([rec("A", [FACE])], [trace("A", [FACE, FACE])])
    assert r.acc_whole == 0.0 and r.acc_tool == 1.0


def test_scoring_errors():
    with pytest.raises(ScoringError):
        score([rec("A", [FACE]), rec("A", [FACE])], [])
    with pytest.raises(ScoringError):
        score([rec("A", [FACE])], [trace("A", [FACE]), trace("A", [FACE])])
    with pytest.raises(ScoringError):
        score([rec("A", [FACE])], [trace("Z", [FACE])])


def test_parallel_scoring_matches(small_dataset):
    preds = [trace(r.query.id, r.gold_actions[:1]) for r in small_dataset]
    assert score(small_dataset, preds, parallelism=6) == score(small_dataset, preds)


def test_metrics_add():
    assert Metrics(1, 2, 1, 2, 1, 1, 1) + Metrics(1, 3, 2, 1, 0, 2, 0) == Metrics(2, 5, 3, 3, 1, 3, 1)
    assert Metrics().exact("tool") is None and Metrics().acc_tool == 0.0


CHOICES = [FACE, ToolCall("PersonReidentification", FACE.tool_input),
           ToolCall("FaceRecognition", "suspect_A.jpg, Paris"), Final("x")]


@st.composite
def scenario(draw):
    n = draw(st.integers(1, 6))
    gold, pred = [], []
    for i in range(n):
        steps = [FACE] * draw(st.integers(1, 2))
        gold.append(rec(str(i), steps))
        acts = draw(st.lists(st.sampled_from(CHOICES), max_size=4))
        pred.append(trace(str(i), acts))
    return gold, pred


@settings(max_examples=60)
@given(scenario(), st.randoms())
def test_permutation_invariance(sc, rnd):
    gold, pred = sc
    g2, p2 = gold[:], pred[:]
    rnd.shuffle(g2)
    rnd.shuffle(p2)
    assert score(gold, pred).overall == score(g2, p2).overall


@settings(max_examples=60)
@given(scenario(), st.data())
def test_monotonic_correction(sc, data):
    gold, pred = sc
    before = score(gold, pred).overall
    i = data.draw(st.integers(0, len(gold) - 1))
    acts = [s.action for s in pred[i].steps]
    gold_acts = gold[i].gold_actions
    wrong = [t for t in range(min(len(acts), len(gold_acts))) if acts[t] != gold_acts[t]]
    if not wrong:
        return
    t = data.draw(st.sampled_from(wrong))
    acts[t] = gold_acts[t]
    fixed = pred[:i] + [trace(str(i), acts)] + pred[i + 1:]
    after = score(gold, fixed).overall
    for m in ("decision", "tool", "input", "whole"):
        assert after.value(m) >= before.value(m)


@settings(max_examples=60)
@given(scenario())
def test_whole_one_iff_all_perfect(sc):
    gold, pred = sc
    o = score(gold, pred).overall
    for m in ("decision", "tool", "input", "whole"):
        assert 0.0 <= o.value(m) <= 1.0
    # answer text is not compared by default; only a final's presence and position
    def perfect_sample(g, p):
        acts = [s.action for s in p.steps]
        return (len(acts) == len(g.gold_actions) and acts[:-1] == list(g.gold_steps)
                and isinstance(acts[-1], Final))

    perfect = all(perfect_sample(g, p) for g, p in zip(gold, pred))
    assert (o.acc_whole == 1.0) == perfect
    if o.acc_whole == 1.0:
        assert o.acc_decision == o.acc_tool == o.acc_input == 1.0
