"""Scoring, answer extraction, reports, and trajectory analytics.

The default scoring path is fully deterministic: normalized-match accuracy,
last-standalone-integer count extraction, normalized name-set F1, and 1-D
interval IoU. An LLM judge is an optional mode for accuracy only, falling back
to the normalized match when its verdict cannot be parsed.
"""

from __future__ import annotations

import logging
import re
import string
from collections import Counter
from dataclasses import dataclass, field

from . import prompts
from .corpus import TaskInstance
from .infonav import ConsensusResult, Plan, RationaleSlot, apply_update, trajectory_stats
from .intervals import intersection_length, merge_intervals, parse_time_spans, slots_to_hours

logger = logging.getLogger(__name__)

_ARTICLES = {"a", "an", "the"}
_HONORIFICS = {"mr", "mrs", "ms", "dr", "prof", "miss"}
_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})

_SPELLED_NUMBERS = {
    "zero": 0, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
    "thirteen": 13, "fourteen": 14, "fifteen": 15, "sixteen": 16,
    "seventeen": 17, "eighteen": 18, "nineteen": 19, "twenty": 20,
}


def normalize_text(text: str) -> str:
    """Lowercase, drop punctuation and articles, collapse whitespace."""
    words = text.lower().translate(_PUNCT_TABLE).split()
    return " ".join(w for w in words if w not in _ARTICLES)


def normalize_name(name: str) -> str:
    words = name.lower().translate(_PUNCT_TABLE).split()
    return " ".join(w for w in words if w not in _HONORIFICS)


def metric_accuracy(prediction: str, ground_truth: str, judge=None,
                    question: str = "") -> int:
    """1 if the prediction matches (or contains) the normalized ground truth.

    `judge` is an optional chat callable taking a prompt and returning text;
    an unparseable judge verdict falls back to the normalized match.
    """
    if judge is not None:
        prompt = prompts.get("judge").render(
            question=question, ground_truth=ground_truth, prediction=prediction
        )
        try:
            verdict = judge(prompt)
            match = re.findall(r"(?<!\d)[01](?!\d)", verdict)
            if match:
                return int(match[-1])
            logger.warning("judge verdict unparseable (%r); falling back to normalized match",
                           verdict[:80])
        except Exception as exc:
            logger.warning("judge call failed (%s); falling back to normalized match", exc)
    pred, truth = normalize_text(prediction), normalize_text(ground_truth)
    if not truth:
        return 0
    return int(pred == truth or truth in pred)


def extract_count(text: str) -> int | None:
    """The last standalone integer in the text, digits or spelled out
    (one..twenty); None when there is no number at all.
    """
    best: tuple[int, int] | None = None  # (position, value)
    for m in re.finditer(r"(?<![\w.])\d+(?![\w.])", text):
        best = (m.start(), int(m.group()))
    for m in re.finditer(r"[a-zA-Z]+", text):
        value = _SPELLED_NUMBERS.get(m.group().lower())
        if value is not None and (best is None or m.start() > best[0]):
            best = (m.start(), value)
    return None if best is None else best[1]


def metric_count(prediction: str, ground_truth: int) -> int:
    extracted = extract_count(prediction)
    return int(extracted is not None and extracted == int(ground_truth))


def metric_f1(pred_names, gt_names, normalizer=normalize_name) -> float:
    gt = {normalizer(n) for n in gt_names}
    gt.discard("")
    if not gt:
        raise ValueError("ground-truth name set must be nonempty")
    pred = {normalizer(n) for n in pred_names}
    pred.discard("")
    if not pred:
        return 0.0
    hit = len(pred & gt)
    precision = hit / len(pred)
    recall = hit / len(gt)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def extract_names(text: str, vocabulary=None) -> set[str]:
    """Candidate name set from an answer.

    With a vocabulary (the closed set of valid names), a name counts when its
    normalized form appears in the normalized answer. Without one, the text is
    split on common separators.
    """
    if vocabulary is not None:
        norm_answer = f" {normalize_text(text)} "
        return {v for v in vocabulary if f" {normalize_text(v)} " in norm_answer}
    parts = re.split(r"[,;\n]| and ", text)
    return {p.strip() for p in parts if p.strip()}


def metric_iou(pred_intervals, gt_intervals) -> float:
    """Intersection duration over union duration of two interval sets.

    Each side is unioned first; two empty sets agree vacuously (1.0).
    """
    pred = merge_intervals(pred_intervals)
    gt = merge_intervals(gt_intervals)
    if not pred and not gt:
        return 1.0
    inter = intersection_length(pred, gt) if pred and gt else 0.0
    union = sum(e - s for s, e in merge_intervals(list(pred) + list(gt)))
    return inter / union if union else 1.0


@dataclass(frozen=True)
class MetricResult:
    task_id: str
    metric: str
    score: float
    prediction: str
    normalized_prediction: str
    judge_mode: bool = False
    dataset_tag: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


def score_task(task: TaskInstance, answer_text: str, judge=None) -> MetricResult:
    """Score a free-text answer against a task's ground truth."""
    normalized = normalize_text(answer_text)
    if task.metric == "accuracy":
        score = float(metric_accuracy(answer_text, task.answer, judge=judge,
                                      question=task.question))
    elif task.metric == "count_accuracy":
        score = float(metric_count(answer_text, task.answer))
    elif task.metric == "f1":
        pred = extract_names(answer_text, vocabulary=task.extra.get("vocabulary"))
        score = metric_f1(pred, task.answer)
        normalized = ", ".join(sorted(normalize_name(p) for p in pred))
    elif task.metric == "interval_iou":
        pred = parse_time_spans(answer_text)
        score = metric_iou(pred, slots_to_hours(task.answer))
        normalized = ", ".join(f"{s:g}-{e:g}" for s, e in pred)
    else:
        raise ValueError(f"unknown metric {task.metric!r}")
    return MetricResult(
        task_id=task.id,
        metric=task.metric,
        score=score,
        prediction=answer_text,
        normalized_prediction=normalized,
        judge_mode=judge is not None,
        dataset_tag=task.dataset_tag,
    )


# ---------------------------------------------------------------------------
# Reports.
# ---------------------------------------------------------------------------


@dataclass
class Report:
    per_dataset: dict[str, tuple[float, int]]  # tag -> (mean score, task count)
    metadata: dict = field(default_factory=dict)
    results: list[MetricResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "datasets": {
                tag: {"mean_score": mean, "tasks": count}
                for tag, (mean, count) in self.per_dataset.items()
            },
            "results": [
                {
                    "task_id": r.task_id,
                    "metric": r.metric,
                    "score": round(r.score, 4),
                    "normalized_prediction": r.normalized_prediction,
                    "judge_mode": r.judge_mode,
                    "dataset_tag": r.dataset_tag,
                }
                for r in self.results
            ],
        }

    def render_text(self) -> str:
        rows = [("dataset", "tasks", "mean score")]
        for tag, (mean, count) in self.per_dataset.items():
            rows.append((tag or "(untagged)", str(count), f"{mean:.4f}"))
        widths = [max(len(row[i]) for row in rows) for i in range(3)]
        lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def aggregate_report(results: list[MetricResult], metadata: dict | None = None) -> Report:
    if not results:
        raise ValueError("need at least one result to aggregate")
    ordered = sorted(results, key=lambda r: r.task_id)
    per_dataset: dict[str, tuple[float, int]] = {}
    for tag in sorted({r.dataset_tag for r in ordered}):
        scores = [r.score for r in ordered if r.dataset_tag == tag]
        per_dataset[tag] = (sum(scores) / len(scores), len(scores))
    return Report(per_dataset=per_dataset, metadata=metadata or {}, results=ordered)


# ---------------------------------------------------------------------------
# Trajectory analytics.
# ---------------------------------------------------------------------------

MEMORY_PARAMETERS = ("context_window", "limit", "keywords", "topk", "query_text_len")
DIRECTIONS = ("increase", "decrease", "unchanged", "replaced")


@dataclass
class MemoryBehaviorStats:
    overall: dict[str, Counter]
    by_success: dict[bool, dict[str, Counter]]

    def fractions(self, parameter: str) -> dict[str, float]:
        counts = self.overall.get(parameter, Counter())
        total = sum(counts.values())
        return {d: (counts[d] / total if total else 0.0) for d in DIRECTIONS}


def _run_success(records: list[dict]) -> bool:
    for rec in records:
        if rec.get("type") == "run_end":
            score = rec.get("score")
            return score is not None and abs(score - 1.0) < 1e-9
    return False


def memory_behavior_stats(runs: list[list[dict]]) -> MemoryBehaviorStats:
    """Distribution of query-parameter adjustment directions, overall and split
    by task success, from trajectory log records.
    """
    if not runs:
        raise ValueError("no trajectory logs supplied")
    overall: dict[str, Counter] = {p: Counter() for p in MEMORY_PARAMETERS}
    by_success: dict[bool, dict[str, Counter]] = {
        True: {p: Counter() for p in MEMORY_PARAMETERS},
        False: {p: Counter() for p in MEMORY_PARAMETERS},
    }
    for records in runs:
        success = _run_success(records)
        for rec in records:
            if rec.get("type") != "param_change":
                continue
            param = rec.get("parameter")
            direction = rec.get("direction")
            if param in overall and direction in DIRECTIONS:
                overall[param][direction] += 1
                by_success[success][param][direction] += 1
    return MemoryBehaviorStats(overall=overall, by_success=by_success)


def plans_from_records(records: list[dict]) -> tuple[list[Plan], list[ConsensusResult]]:
    """Rebuild per-agent plans and consensus results from one run's log."""
    plans: dict[tuple[str, str], Plan] = {}
    consensus_results: list[ConsensusResult] = []
    for rec in records:
        key = (rec.get("comm", "root"), rec.get("agent", ""))
        if rec["type"] == "plan_created":
            slots = [RationaleSlot(" ".join(desc.split())) for desc in rec.get("slots", [])]
            if slots:
                plans[key] = Plan(question=rec.get("question", ""), slots=slots)
        elif rec["type"] == "plan_update" and key in plans:
            plan = plans[key]
            updates = []
            for desc, value in rec.get("filled", []):
                idx = plan.slot_index(desc)
                if idx is None:
                    plan.slots.append(RationaleSlot(" ".join(desc.split())))
                    idx = len(plan.slots) - 1
                updates.append((idx, value))
            apply_update(plan, updates, rec.get("turn", 0))
        elif rec["type"] == "consensus":
            consensus_results.append(
                ConsensusResult(
                    merged=dict(rec.get("merged", {})),
                    conflicts=[tuple(c) for c in rec.get("conflicts", [])],
                    agreement_ratio=rec.get("agreement_ratio", 0.0),
                )
            )
    return list(plans.values()), consensus_results


def infonav_stats_from_logs(runs: list[list[dict]]) -> dict[str, object]:
    """Per-run plan statistics split by whether the task was answered right.

    Rows: "all", "right", "wrong"; a row without any runs maps to None.
    """
    if not runs:
        raise ValueError("no trajectory logs supplied")
    buckets: dict[str, tuple[list[Plan], list[ConsensusResult]]] = {
        "all": ([], []), "right": ([], []), "wrong": ([], []),
    }
    for records in runs:
        plans, cons = plans_from_records(records)
        if not plans:
            continue
        row = "right" if _run_success(records) else "wrong"
        for name in ("all", row):
            buckets[name][0].extend(plans)
            buckets[name][1].extend(cons)
    return {
        name: (trajectory_stats(plans, cons) if plans else None)
        for name, (plans, cons) in buckets.items()
    }
