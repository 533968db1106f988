"""Agreement and correlation statistics between machine and human scores.

Human annotations arrive as JSON Lines, one ``{"unit_id", "annotator",
"score"}`` object per line with integer scores 1..10.  Per-unit consensus is
the plain mean over annotators; agreement uses Fleiss' kappa over the ten
integer score categories (kappa needs categorical data, so the raw integers
are used there while Pearson gets the means).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateAgreement,
    DuplicateId,
    EmptyIntersection,
    LengthMismatch,
    MalformedInput,
    RaggedMatrix,
    ZeroVariance,
)
from .metrics import MetricKind

SCORE_CATEGORIES = tuple(range(1, 11))


# ------------------------------------------------------------------ pearson


def pearson_r(xs, ys) -> float:
    """Product-moment correlation of two equal-length nonconstant vectors."""
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    if len(xs) != len(ys):
        raise LengthMismatch(f"got {len(xs)} vs {len(ys)} values")
    if len(xs) < 2:
        raise LengthMismatch(f"need at least 2 pairs, got {len(xs)}")
    if min(xs) == max(xs) or min(ys) == max(ys):
        raise ZeroVariance("correlation undefined for a constant vector")
    r = float(np.corrcoef(xs, ys)[0, 1])
    return max(-1.0, min(1.0, r))


# ------------------------------------------------------------- fleiss kappa


def fleiss_kappa(ratings) -> float:
    """Fleiss' kappa for an items x categories matrix of rating counts.

    Every item must be rated by the same number (>= 2) of raters.  Unanimous
    matrices score exactly 1.0 regardless of shape.
    """
    matrix = [list(row) for row in ratings]
    if not matrix or not matrix[0]:
        raise RaggedMatrix("empty rating matrix")
    width = len(matrix[0])
    for row in matrix:
        if len(row) != width:
            raise RaggedMatrix("rows have differing category counts")
        for cell in row:
            if cell != int(cell) or cell < 0:
                raise RaggedMatrix(f"invalid count {cell!r}")
    raters = sum(matrix[0])
    for row in matrix:
        if sum(row) != raters:
            raise RaggedMatrix("items rated by differing numbers of raters")
    if raters < 2:
        raise RaggedMatrix(f"need >= 2 raters per item, got {raters}")

    n_items = len(matrix)
    # per-item observed agreement, then its mean
    p_bar = sum(
        (sum(c * c for c in row) - raters) / (raters * (raters - 1)) for row in matrix
    ) / n_items
    if p_bar == 1.0:
        return 1.0
    shares = [sum(row[j] for row in matrix) / (n_items * raters) for j in range(width)]
    p_expected = sum(s * s for s in shares)
    if p_expected == 1.0:  # full mass in one category yet p_bar < 1: corrupt
        raise DegenerateAgreement("chance agreement is 1; kappa undefined")
    return (p_bar - p_expected) / (1.0 - p_expected)


# -------------------------------------------------------- human annotations


@dataclass(frozen=True)
class AnnotationRecord:
    unit_id: str
    annotator_id: str
    score: int


@dataclass(frozen=True)
class HumanAnnotationSet:
    records: tuple[AnnotationRecord, ...]

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if not 1 <= rec.score <= 10 or rec.score != int(rec.score):
                raise MalformedInput(
                    f"score {rec.score!r} for {rec.unit_id!r} outside 1..10"
                )
            key = (rec.unit_id, rec.annotator_id)
            if key in seen:
                raise DuplicateId(f"duplicate annotation for {key}")
            seen.add(key)

    @classmethod
    def from_jsonl(cls, text: str) -> "HumanAnnotationSet":
        records = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedInput(f"line {lineno}: not JSON") from exc
            if not isinstance(obj, dict):
                raise MalformedInput(f"line {lineno}: expected an object")
            try:
                unit = obj["unit_id"]
                annotator = obj["annotator"]
                score = obj["score"]
            except KeyError as exc:
                raise MalformedInput(f"line {lineno}: missing key {exc}") from exc
            if not isinstance(unit, str) or not isinstance(annotator, str):
                raise MalformedInput(f"line {lineno}: ids must be strings")
            if isinstance(score, bool) or not isinstance(score, int):
                raise MalformedInput(f"line {lineno}: score must be an integer")
            records.append(AnnotationRecord(unit, annotator, score))
        return cls(tuple(records))

    def scores_by_unit(self) -> dict[str, list[int]]:
        grouped: dict[str, list[tuple[str, int]]] = {}
        for rec in self.records:
            grouped.setdefault(rec.unit_id, []).append((rec.annotator_id, rec.score))
        return {
            unit: [score for _, score in sorted(pairs)]
            for unit, pairs in sorted(grouped.items())
        }

    @property
    def consensus(self) -> dict[str, float]:
        return {
            unit: sum(scores) / len(scores)
            for unit, scores in self.scores_by_unit().items()
        }

    def rating_matrix(self) -> tuple[list[list[int]], list[str]]:
        """Counts over the ten score categories, one row per unit (sorted).
        Raises RaggedMatrix when units have unequal annotator counts."""
        by_unit = self.scores_by_unit()
        counts = {len(scores) for scores in by_unit.values()}
        if len(counts) > 1:
            raise RaggedMatrix(
                f"units have differing annotator counts: {sorted(counts)}"
            )
        matrix = []
        for unit, scores in by_unit.items():
            row = [0] * len(SCORE_CATEGORIES)
            for score in scores:
                row[score - 1] += 1
            matrix.append(row)
        return matrix, list(by_unit)

    def disputes(self, spread: int = 2) -> list[str]:
        """Units whose annotators disagree by more than ``spread`` points."""
        return [
            unit
            for unit, scores in self.scores_by_unit().items()
            if max(scores) - min(scores) > spread
        ]


# ------------------------------------------------------------------- joins


@dataclass(frozen=True)
class JoinResult:
    unit_ids: tuple[str, ...]
    xs: tuple[float, ...]  # machine means
    ys: tuple[float, ...]  # human consensus
    dropped_run: int  # run units with no human counterpart
    dropped_human: int  # human units with no run counterpart


def _unit_means(run, metric: MetricKind) -> dict[str, float]:
    """Per-unit means for one metric from a RunReport object or its dict form."""
    per_metric = run.per_metric if hasattr(run, "per_metric") else run["per_metric"]
    fragment = per_metric.get(metric.value)
    if fragment is None:
        return {}
    if hasattr(fragment, "pooled_unit_means"):
        return dict(fragment.pooled_unit_means)
    return dict(fragment.get("pooled_unit_means", {}))


def join_scores(run, human: HumanAnnotationSet, metric: MetricKind) -> JoinResult:
    """Pair machine and human scores over their shared unit ids (sorted)."""
    machine = _unit_means(run, metric)
    consensus = human.consensus
    shared = sorted(set(machine) & set(consensus))
    if not shared:
        raise EmptyIntersection(f"no shared unit ids for {metric.value}")
    return JoinResult(
        unit_ids=tuple(shared),
        xs=tuple(machine[u] for u in shared),
        ys=tuple(consensus[u] for u in shared),
        dropped_run=len(set(machine) - set(consensus)),
        dropped_human=len(set(consensus) - set(machine)),
    )


# ----------------------------------------------------------------- reports


@dataclass(frozen=True)
class CorrelationReport:
    per_metric: dict[str, dict]  # metric value -> pearson_r/n/drop counts
    kappa: float | None
    disputes: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "per_metric": {k: dict(v) for k, v in sorted(self.per_metric.items())},
            "kappa": self.kappa,
            "disputes": list(self.disputes),
        }


def correlate(run, human: HumanAnnotationSet) -> CorrelationReport:
    """Per-metric Pearson correlation plus kappa and dispute listing.

    Metrics whose correlation is undefined (constant vectors, n < 2) keep
    their join counts with ``pearson_r: null``.  Raises EmptyIntersection
    only when *no* metric shares any unit with the annotations.
    """
    per_metric_src = run.per_metric if hasattr(run, "per_metric") else run["per_metric"]
    per_metric: dict[str, dict] = {}
    any_overlap = False
    for key in sorted(per_metric_src):
        metric = MetricKind.from_string(key)
        try:
            join = join_scores(run, human, metric)
        except EmptyIntersection:
            per_metric[key] = {
                "pearson_r": None,
                "n": 0,
                "dropped_run": len(_unit_means(run, metric)),
                "dropped_human": len(human.consensus),
            }
            continue
        any_overlap = True
        try:
            r = pearson_r(join.xs, join.ys)
        except (LengthMismatch, ZeroVariance):
            r = None
        per_metric[key] = {
            "pearson_r": r,
            "n": len(join.unit_ids),
            "dropped_run": join.dropped_run,
            "dropped_human": join.dropped_human,
        }
    if not any_overlap:
        raise EmptyIntersection("annotations share no unit ids with the run")

    try:
        matrix, _units = human.rating_matrix()
        kappa = fleiss_kappa(matrix)
    except (RaggedMatrix, DegenerateAgreement):
        kappa = None
    return CorrelationReport(
        per_metric=per_metric, kappa=kappa, disputes=tuple(human.disputes())
    )


METRIC_ORDER = ("SCA", "HRR", "HRE", "HRI")


def _fmt(value) -> str:
    if value is None:
        return "-"
    return f"{value:.4f}"


def render_report(run, corr: CorrelationReport | None = None, format: str = "json") -> bytes:
    """Byte-deterministic report: canonical JSON or a Markdown table pair.

    The Markdown layout is one wide summary row (metric columns, plus "-r"
    correlation columns when correlations are present) followed by a
    per-metric detail table with means and success rates.
    """
    run_dict = run.to_dict() if hasattr(run, "to_dict") else dict(run)
    corr_dict = corr.to_dict() if corr is not None else None
    if format == "json":
        payload = {"run": run_dict, "correlation": corr_dict}
        text = json.dumps(
            payload, sort_keys=True, ensure_ascii=False, separators=(",", ":")
        )
        return (text + "\n").encode("utf-8")
    if format != "markdown":
        raise ValueError(f"unknown report format {format!r}")

    fragments = run_dict.get("per_metric", {})

    def mean_of(key):
        return fragments.get(key, {}).get("mean_score")

    def rate_of(key):
        return fragments.get(key, {}).get("success_rate")

    headers = list(METRIC_ORDER)
    values = [_fmt(mean_of(m)) for m in METRIC_ORDER]
    if corr_dict is not None:
        headers += [f"{m}-r" for m in METRIC_ORDER]
        values += [
            _fmt(corr_dict["per_metric"].get(m, {}).get("pearson_r"))
            for m in METRIC_ORDER
        ]
    lines = [
        "| " + " | ".join(headers) + " |",
        "| " + " | ".join("---" for _ in headers) + " |",
        "| " + " | ".join(values) + " |",
        "",
        "| metric | mean | success rate |",
        "| --- | --- | --- |",
    ]
    for m in METRIC_ORDER:
        if m in fragments:
            lines.append(f"| {m} | {_fmt(mean_of(m))} | {_fmt(rate_of(m))} |")
    if corr_dict is not None and corr_dict.get("kappa") is not None:
        lines.append("")
        lines.append(f"Fleiss' kappa: {_fmt(corr_dict['kappa'])}")
    if corr_dict is not None and corr_dict.get("disputes"):
        lines.append("")
        lines.append("Disputed units: " + ", ".join(corr_dict["disputes"]))
    return ("\n".join(lines) + "\n").encode("utf-8")
