"""Scoring agent traces against gold records.

Four accuracies are reported:

* decision: the Yes/No tool decision, over every gold step (finals included);
* tool: the chosen tool name, over gold tool steps;
* input: the tool input, over gold tool steps;
* whole: the fraction of samples whose every step is right, including a
  terminating final step and no extra steps.

Denominators are fixed by the gold data. Missing predicted steps count as
wrong; predicted steps past the gold length only affect ``whole``.
"""

from __future__ import annotations

import csv
import io
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .dataset import DatasetRecord, is_interrelated
from .react_format import Final, FormatViolation, ToolCall, Trace
from .tools import InputShapeError, Registry, canonical_registry, parse_tool_input

METRICS = ("decision", "tool", "input", "whole")
GROUPS = ("single", "interrelated", "all")
GROUP_TITLES = {"single": "Single Tool Responses",
                "interrelated": "Interrelated Tools Responses",
                "all": "All Responses"}
METRIC_TITLES = {"decision": "Decis", "tool": "Tool", "input": "Input", "whole": "Whole"}


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class StepJudgment:
    decision_correct: bool
    tool_correct: bool | None = None
    input_correct: bool | None = None

    @property
    def all_correct(self) -> bool:
        return self.decision_correct and self.tool_correct is not False \
            and self.input_correct is not False


def _collapse(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip())


def _inputs_match(gold: ToolCall, pred: str, lenient: bool, registry: Registry) -> bool:
    if _collapse(gold.tool_input) == _collapse(pred):
        return True
    if not lenient or gold.tool_name not in registry:
        return False
    spec = registry.spec(gold.tool_name)
    try:
        g = parse_tool_input(gold.tool_input, spec)
        p = parse_tool_input(pred, spec)
    except InputShapeError:
        return False
    media_ok = (g.media_ref is None and p.media_ref is None) or (
        g.media_ref is not None and p.media_ref is not None
        and _collapse(g.media_ref) == _collapse(p.media_ref))
    return media_ok and _collapse(g.location).casefold() == _collapse(p.location).casefold()


def judge_step(gold, predicted, lenient: bool = True, registry: Registry | None = None,
               match_final_text: bool = False) -> StepJudgment:
    """Judge one predicted step (an action, a violation, or None) against gold."""
    registry = registry or _default_registry()
    is_tool = isinstance(gold, ToolCall)
    if predicted is None or isinstance(predicted, FormatViolation):
        return StepJudgment(False, False, False) if is_tool else StepJudgment(False)
    decision_ok = predicted.decision == gold.decision
    if not is_tool:
        if match_final_text and decision_ok:
            decision_ok = _collapse(predicted.answer) == _collapse(gold.answer)
        return StepJudgment(decision_ok)
    if not isinstance(predicted, ToolCall):
        return StepJudgment(decision_ok, False, False)
    if lenient:
        tool_ok = predicted.tool_name.casefold() == gold.tool_name.casefold()
    else:
        tool_ok = predicted.tool_name == gold.tool_name
    return StepJudgment(decision_ok, tool_ok,
                        _inputs_match(gold, predicted.tool_input, lenient, registry))


_REGISTRY = None


def _default_registry() -> Registry:
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = canonical_registry()
    return _REGISTRY


@dataclass(frozen=True)
class Metrics:
    """Hit counts and denominators for one slice of samples."""

    samples: int = 0
    steps: int = 0
    tool_steps: int = 0
    decision_hits: int = 0
    tool_hits: int = 0
    input_hits: int = 0
    whole_hits: int = 0

    def __add__(self, other: "Metrics") -> "Metrics":
        return Metrics(*(a + b for a, b in zip(self._tuple(), other._tuple())))

    def _tuple(self):
        return (self.samples, self.steps, self.tool_steps, self.decision_hits,
                self.tool_hits, self.input_hits, self.whole_hits)

    def exact(self, metric: str) -> Fraction | None:
        hits, den = {
            "decision": (self.decision_hits, self.steps),
            "tool": (self.tool_hits, self.tool_steps),
            "input": (self.input_hits, self.tool_steps),
            "whole": (self.whole_hits, self.samples),
        }[metric]
        return Fraction(hits, den) if den else None

    def value(self, metric: str) -> float:
        """Accuracy in [0, 1]; 0.0 for an empty denominator."""
        x = self.exact(metric)
        return float(x) if x is not None else 0.0

    @property
    def acc_decision(self) -> float:
        return self.value("decision")

    @property
    def acc_tool(self) -> float:
        return self.value("tool")

    @property
    def acc_input(self) -> float:
        return self.value("input")

    @property
    def acc_whole(self) -> float:
        return self.value("whole")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.acc_decision, self.acc_tool, self.acc_input, self.acc_whole)


@dataclass(frozen=True)
class MetricReport:
    overall: Metrics = Metrics()
    by_group: Mapping[str, Metrics] = field(default_factory=dict)
    by_task: Mapping[str, Metrics] = field(default_factory=dict)
    by_category: Mapping[str, Metrics] = field(default_factory=dict)

    def __getattr__(self, name):
        if name.startswith("acc_") or name in ("samples", "steps", "tool_steps", "as_tuple",
                                              "exact", "value"):
            return getattr(self.overall, name)
        raise AttributeError(name)

    @property
    def counts(self) -> dict:
        o = self.overall
        return {"samples": o.samples, "steps": o.steps, "tool_steps": o.tool_steps}


def score_sample(record: DatasetRecord, trace: Trace | None, lenient: bool = True,
                 registry: Registry | None = None,
                 match_final_text: bool = False) -> tuple[list[StepJudgment], Metrics]:
    gold = record.gold_actions
    predicted = [s.action for s in trace.steps] if trace is not None else []
    judgments = [
        judge_step(g, predicted[t] if t < len(predicted) else None, lenient, registry,
                   match_final_text)
        for t, g in enumerate(gold)
    ]
    whole = (len(predicted) == len(gold) and isinstance(predicted[-1], Final)
             and all(j.all_correct for j in judgments))
    m = Metrics(
        samples=1,
        steps=len(gold),
        tool_steps=len(gold) - 1,
        decision_hits=sum(j.decision_correct for j in judgments),
        tool_hits=sum(bool(j.tool_correct) for j in judgments),
        input_hits=sum(bool(j.input_correct) for j in judgments),
        whole_hits=int(whole),
    )
    return judgments, m


def score(gold: Sequence[DatasetRecord], predicted: Iterable[Trace], lenient: bool = True,
          registry: Registry | None = None, match_final_text: bool = False,
          parallelism: int = 1) -> MetricReport:
    """Score predicted traces, matched to gold records by query id.

    Per-sample judgments are independent; with ``parallelism > 1`` they run
    on a thread pool and are reduced in gold order, so the result does not
    depend on scheduling.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    by_id: dict[str, DatasetRecord] = {}
    for r in gold:
        if r.query.id in by_id:
            raise ScoringError(f"duplicate gold query_id {r.query.id!r}")
        by_id[r.query.id] = r
    preds: dict[str, Trace] = {}
    for tr in predicted:
        if tr.query_id in preds:
            raise ScoringError(f"duplicate predicted query_id {tr.query_id!r}")
        if tr.query_id not in by_id:
            raise ScoringError(f"predicted query_id {tr.query_id!r} has no gold record")
        preds[tr.query_id] = tr

    registry = registry or _default_registry()

    def one(rec):
        return score_sample(rec, preds.get(rec.query.id), lenient, registry, match_final_text)[1]

    records = list(by_id.values())
    if parallelism == 1:
        per_sample = [one(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            per_sample = list(pool.map(one, records))

    overall = Metrics()
    groups: dict[str, Metrics] = defaultdict(Metrics)
    tasks: dict[str, Metrics] = defaultdict(Metrics)
    cats: dict[str, Metrics] = defaultdict(Metrics)
    for rec, m in zip(records, per_sample):
        overall += m
        task = rec.task
        groups["interrelated" if is_interrelated(task) else "single"] += m
        groups["all"] += m
        tasks[task] += m
        cats[rec.category] += m
    return MetricReport(overall, dict(groups), dict(sorted(tasks.items())),
                        dict(sorted(cats.items())))


# --------------------------------------------------------------------------
# rendering


def _pct(m: Metrics | None, metric: str) -> str:
    x = m.exact(metric) if m is not None else None
    return "" if x is None else f"{float(x) * 100:.2f}"


def _rows(report: MetricReport):
    """(label, {group: Metrics}) rows in display order."""
    if report.overall.samples == 0:
        return []
    rows = [("all", {g: report.by_group.get(g) for g in GROUPS})]
    for cat, m in report.by_category.items():
        rows.append((f"category:{cat}", {"all": m}))
    for task, m in report.by_task.items():
        group = "interrelated" if is_interrelated(task) else "single"
        rows.append((task, {group: m, "all": m}))
    return rows


def render_report(report: MetricReport, fmt: str = "markdown") -> str:
    """Markdown table or CSV (``group,metric,tool,value``), percentages to two decimals."""
    if fmt == "markdown":
        header = "| Scope | " + " | ".join(
            f"{GROUP_TITLES[g]} {METRIC_TITLES[m]}" for g in GROUPS for m in METRICS) + " |"
        sep = "|" + "---|" * (1 + len(GROUPS) * len(METRICS))
        lines = [header, sep]
        for label, cells in _rows(report):
            vals = [_pct(cells.get(g), m) or "-" for g in GROUPS for m in METRICS]
            lines.append(f"| {label} | " + " | ".join(vals) + " |")
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "metric", "tool", "value"])
        for label, cells in _rows(report):
            for g in GROUPS:
                if g not in cells:
                    continue
                for m in METRICS:
                    w.writerow([g, m, label, _pct(cells[g], m)])
        return buf.getvalue()
    raise ValueError(f"unknown report format {fmt!r}")


def parse_markdown_report(text: str) -> dict[tuple[str, str, str], str]:
    """Inverse of the markdown renderer: ``{(group, metric, row): value}``."""
    lines = [l for l in text.splitlines() if l.startswith("|")]
    out = {}
    for line in lines[2:]:
        cells = [c.strip() for c in line.strip("|").split("|")]
        label, vals = cells[0], cells[1:]
        for i, v in enumerate(vals):
            if v != "-":
                out[(GROUPS[i // len(METRICS)], METRICS[i % len(METRICS)], label)] = v
    return out


def parse_csv_report(text: str) -> dict[tuple[str, str, str], str]:
    rows = list(csv.reader(io.StringIO(text)))
    return {(g, m, t): v for g, m, t, v in rows[1:] if v != ""}
