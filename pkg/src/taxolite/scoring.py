"""Scoring engine: backend calls, cross-validation, penalties, aggregation.

One *call* submits every unit of a slice for one (variant, round) pair and
must come back as the JSON score envelope ``{"scores":[{"id","score",
"reason"}]}``.  Malformed envelopes are retried up to ``max_retries`` and then
recorded as failed calls; envelopes that parse but skip some unit ids fail
only those units.  Oversized/undersized slices take the window penalties

    over:  P = -lambda * max(1, size / high)
    under: P = -mu     * max(1, low / size)

on their mean score.  Aggregation sorts samples before folding, so reports are
identical no matter how concurrent calls complete.
"""

from __future__ import annotations

import hashlib
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

from .backends import BackendConfig, TokenUsage, make_backend
from .errors import AuthMissing, BackendError, ZeroSize
from .metrics import (
    EvalUnit,
    MetricKind,
    Neighborhood,
    PromptBundle,
    PromptMode,
    build_prompt,
    extract_units,
)
from .selection import (
    SubtreeSlice,
    SubtreeWindow,
    atomic_slices,
    compute_window,
    select_subtrees,
)
from .taxonomy import Taxonomy, compute_stats

REPORT_SCHEMA = "lite/report/v1"


@dataclass(frozen=True)
class PenaltyParams:
    lambda_: float = 0.5
    mu: float = 0.5

    def __post_init__(self):
        if self.lambda_ <= 0 or self.mu <= 0:
            raise ValueError("penalty coefficients must be positive")


@dataclass(frozen=True)
class ScoreSample:
    unit_id: str
    variant_index: int
    round_index: int
    score: int
    reason: str
    usage: TokenUsage
    slice_id: str

    def __post_init__(self):
        if not 1 <= self.score <= 10:
            raise ValueError(f"score {self.score} outside 1..10")


@dataclass(frozen=True)
class CallOutcome:
    """Accounting record of one logical call, including its retries."""

    slice_id: str
    metric: MetricKind
    variant_index: int
    round_index: int
    ok: bool
    retries: int
    usages: tuple[TokenUsage, ...]  # one entry per invocation, retries included
    samples: tuple[ScoreSample, ...]
    missing_unit_ids: tuple[str, ...]
    error: str = ""


@dataclass(frozen=True)
class SliceRun:
    samples: tuple[ScoreSample, ...]
    calls: tuple[CallOutcome, ...]


# ---------------------------------------------------------------------------
# penalties
# ---------------------------------------------------------------------------


def apply_penalty(slice: SubtreeSlice, w: SubtreeWindow, p: PenaltyParams) -> float:
    """Negative adjustment for slices outside the window; 0 inside (judged on
    the actual size, with strict bound violations)."""
    size = slice.size
    if size > w.high:
        return -p.lambda_ * max(1.0, size / w.high)
    if size < w.low:
        if size == 0:
            raise ZeroSize("cannot penalize an empty slice")
        return -p.mu * max(1.0, w.low / size)
    return 0.0


# ---------------------------------------------------------------------------
# cross-validation variants
# ---------------------------------------------------------------------------


def _variant_rng(seed: int, slice_id: str, variant_index: int) -> random.Random:
    material = f"{seed}|{slice_id}|{variant_index}".encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _variant_units(
    units: list[EvalUnit], seed: int, slice_id: str, variant_index: int
) -> list[EvalUnit]:
    """Sibling-order permutation: variant 0 is the identity; higher variants
    shuffle both neighborhood child order and unit listing order, seeded per
    (seed, slice, variant)."""
    if variant_index == 0:
        return list(units)
    rng = _variant_rng(seed, slice_id, variant_index)
    out = []
    for u in units:
        if isinstance(u.payload, Neighborhood):
            children = list(u.payload.child_labels)
            rng.shuffle(children)
            u = replace(u, payload=Neighborhood(u.payload.parent_label, tuple(children)))
        out.append(u)
    rng.shuffle(out)
    return out


# ---------------------------------------------------------------------------
# calls
# ---------------------------------------------------------------------------


def _parse_envelope(
    text: str, unit_ids: tuple[str, ...]
) -> dict[str, tuple[int, str]] | None:
    """Extract {unit_id: (score, reason)} from model text, or None when the
    envelope is unusable (not JSON / wrong shape / zero matching ids).  First
    entry wins for duplicated ids; out-of-range or non-integer scores
    invalidate only their entry."""
    try:
        doc = json.loads(text)
    except ValueError:
        return None
    if not isinstance(doc, dict) or not isinstance(doc.get("scores"), list):
        return None
    wanted = set(unit_ids)
    out: dict[str, tuple[int, str]] = {}
    for entry in doc["scores"]:
        if not isinstance(entry, dict):
            continue
        uid = entry.get("id")
        score = entry.get("score")
        if isinstance(score, float) and score.is_integer():
            score = int(score)
        if (
            uid in wanted
            and uid not in out
            and isinstance(score, int)
            and not isinstance(score, bool)
            and 1 <= score <= 10
        ):
            out[uid] = (score, str(entry.get("reason", "")))
    return out or None


def _attempt_call(
    backend,
    bundle: PromptBundle,
    cfg: BackendConfig,
    slice_id: str,
    metric: MetricKind,
    variant_index: int,
    round_index: int,
) -> CallOutcome:
    usages: list[TokenUsage] = []
    error = ""
    for attempt in range(cfg.max_retries + 1):
        try:
            text, usage = backend.complete(bundle, cfg)
        except AuthMissing:
            raise  # deterministic config error; retrying cannot help
        except BackendError as exc:
            if attempt == cfg.max_retries:
                raise
            error = str(exc)
            continue
        usages.append(usage)
        parsed = _parse_envelope(text, bundle.unit_ids)
        if parsed is None:
            error = "unparseable score envelope"
            continue
        samples = tuple(
            ScoreSample(
                unit_id=uid,
                variant_index=variant_index,
                round_index=round_index,
                score=parsed[uid][0],
                reason=parsed[uid][1],
                usage=usage,
                slice_id=slice_id,
            )
            for uid in bundle.unit_ids
            if uid in parsed
        )
        missing = tuple(uid for uid in bundle.unit_ids if uid not in parsed)
        return CallOutcome(
            slice_id=slice_id,
            metric=metric,
            variant_index=variant_index,
            round_index=round_index,
            ok=True,
            retries=attempt,
            usages=tuple(usages),
            samples=samples,
            missing_unit_ids=missing,
        )
    return CallOutcome(
        slice_id=slice_id,
        metric=metric,
        variant_index=variant_index,
        round_index=round_index,
        ok=False,
        retries=cfg.max_retries,
        usages=tuple(usages),
        samples=(),
        missing_unit_ids=bundle.unit_ids,
        error=error,
    )


def run_slice(
    slice: SubtreeSlice,
    units: list[EvalUnit],
    metric: MetricKind,
    mode: PromptMode,
    cfg: BackendConfig,
    variants: int = 1,
    rounds: int = 1,
    seed: int = 0,
    backend=None,
) -> SliceRun:
    """Score one slice across all (variant, round) pairs, with full call
    accounting."""
    if variants < 1 or rounds < 1:
        raise ValueError("variants and rounds must be >= 1")
    if backend is None:
        backend = make_backend(cfg.backend)
    samples: list[ScoreSample] = []
    calls: list[CallOutcome] = []
    for v in range(variants):
        vunits = _variant_units(units, seed, slice.slice_id, v)
        bundle = build_prompt(vunits, metric, mode)
        for r in range(rounds):
            outcome = _attempt_call(backend, bundle, cfg, slice.slice_id, metric, v, r)
            calls.append(outcome)
            samples.extend(outcome.samples)
    return SliceRun(samples=tuple(samples), calls=tuple(calls))


def score_slice(
    slice: SubtreeSlice,
    units: list[EvalUnit],
    metric: MetricKind,
    mode: PromptMode,
    cfg: BackendConfig,
    backend=None,
) -> list[ScoreSample]:
    """Single-variant, single-round scoring of one slice."""
    run = run_slice(slice, units, metric, mode, cfg, backend=backend)
    return list(run.samples)


def cross_validate(
    slice: SubtreeSlice,
    units: list[EvalUnit],
    metric: MetricKind,
    mode: PromptMode,
    cfg: BackendConfig,
    variants: int = 3,
    rounds: int = 3,
    seed: int = 0,
    backend=None,
) -> list[ScoreSample]:
    """Score seeded sibling-permutation variants over several rounds and pool
    every sample; averaging happens downstream in aggregate()."""
    run = run_slice(
        slice, units, metric, mode, cfg,
        variants=variants, rounds=rounds, seed=seed, backend=backend,
    )
    return list(run.samples)


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def _clamp(x: float) -> float:
    return min(10.0, max(0.0, x))


@dataclass(frozen=True)
class MetricFragment:
    metric: MetricKind
    mean_score: float | None
    success_rate: float
    penalty_total: float
    unit_scores: tuple[dict, ...]  # per (slice, unit): mean and sample count
    slice_scores: tuple[dict, ...]  # per slice: raw mean, penalty, final score
    pooled_unit_means: dict[str, float]  # unit_id -> mean over all samples
    attempted_calls: int
    ok_calls: int

    def to_dict(self) -> dict:
        return {
            "mean_score": self.mean_score,
            "success_rate": self.success_rate,
            "penalty_total": self.penalty_total,
            "unit_scores": list(self.unit_scores),
            "slice_scores": list(self.slice_scores),
            "pooled_unit_means": dict(sorted(self.pooled_unit_means.items())),
            "attempted_calls": self.attempted_calls,
            "ok_calls": self.ok_calls,
        }


def aggregate(
    samples: Sequence[ScoreSample],
    penalties: dict[str, float],
    metric: MetricKind,
    calls: Sequence[CallOutcome] = (),
) -> MetricFragment:
    """Reduce samples to the metric's report fragment.

    unit mean -> slice mean (+ its penalty, clamped to [0,10]) -> metric mean
    weighted by each slice's scored-unit count.  Samples are sorted first, so
    any arrival order produces the same fragment.  No samples at all is
    reported (mean absent, success 0), not raised.
    """
    ordered = sorted(
        samples, key=lambda s: (s.slice_id, s.unit_id, s.variant_index, s.round_index)
    )
    by_unit: dict[tuple[str, str], list[int]] = {}
    pooled: dict[str, list[int]] = {}
    for s in ordered:
        by_unit.setdefault((s.slice_id, s.unit_id), []).append(s.score)
        pooled.setdefault(s.unit_id, []).append(s.score)

    unit_rows = []
    slice_units: dict[str, list[float]] = {}
    for (slice_id, unit_id), scores in sorted(by_unit.items()):
        mean = sum(scores) / len(scores)
        unit_rows.append(
            {"slice_id": slice_id, "unit_id": unit_id, "mean": mean, "samples": len(scores)}
        )
        slice_units.setdefault(slice_id, []).append(mean)

    slice_rows = []
    weighted_sum = 0.0
    weight = 0
    for slice_id, means in sorted(slice_units.items()):
        raw = sum(means) / len(means)
        penalty = penalties.get(slice_id, 0.0)
        final = _clamp(raw + penalty)
        slice_rows.append(
            {
                "slice_id": slice_id,
                "raw_mean": raw,
                "penalty": penalty,
                "score": final,
                "units_scored": len(means),
            }
        )
        weighted_sum += final * len(means)
        weight += len(means)

    attempted = len(calls)
    ok = sum(1 for c in calls if c.ok)
    return MetricFragment(
        metric=metric,
        mean_score=(weighted_sum / weight) if weight else None,
        success_rate=(ok / attempted) if attempted else 0.0,
        penalty_total=sum(penalties.values()),
        unit_scores=tuple(unit_rows),
        slice_scores=tuple(slice_rows),
        pooled_unit_means={uid: sum(v) / len(v) for uid, v in pooled.items()},
        attempted_calls=attempted,
        ok_calls=ok,
    )


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunReport:
    per_metric: dict[str, MetricFragment]  # keyed by MetricKind.value
    tokens: dict
    config_echo: dict
    window: dict | None  # effective bounds; None in atomic mode

    @property
    def overall_success_rate(self) -> float:
        attempted = sum(f.attempted_calls for f in self.per_metric.values())
        ok = sum(f.ok_calls for f in self.per_metric.values())
        return (ok / attempted) if attempted else 0.0

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "config": self.config_echo,
            "window": self.window,
            "per_metric": {k: f.to_dict() for k, f in sorted(self.per_metric.items())},
            "tokens": self.tokens,
            "overall_success_rate": self.overall_success_rate,
        }

    def to_canonical_json(self) -> bytes:
        text = json.dumps(
            self.to_dict(), sort_keys=True, ensure_ascii=False, separators=(",", ":")
        )
        return (text + "\n").encode("utf-8")


def _echo(cfg: BackendConfig, penalty: PenaltyParams, **kw) -> dict:
    echo = {
        "backend": cfg.backend,
        "endpoint_url": cfg.endpoint_url,
        "model_name": cfg.model_name,
        "temperature": cfg.temperature,
        "api_key_env": cfg.api_key_env,
        "max_retries": cfg.max_retries,
        "parallelism": cfg.parallelism,
        "timeout_ms": cfg.timeout_ms,
        "lambda": penalty.lambda_,
        "mu": penalty.mu,
    }
    echo.update(kw)
    return echo


def run_evaluation(
    t: Taxonomy,
    metrics: Sequence[MetricKind],
    k: float | None = 1.0,
    mode: PromptMode = PromptMode.FULL,
    cfg: BackendConfig | None = None,
    penalty: PenaltyParams | None = None,
    variants: int = 1,
    rounds: int = 1,
    seed: int = 0,
    backend=None,
    extra_echo: dict | None = None,
) -> RunReport:
    """Whole-taxonomy evaluation: slice, score every metric, aggregate.

    ``k=None`` switches to atomic mode (per-metric minimal slices, no
    penalties).  Slices that yield no units for a metric are skipped, not
    counted as attempts.  Calls may run concurrently up to cfg.parallelism;
    results are keyed and sorted before aggregation so the report bytes do
    not depend on completion order.
    """
    cfg = cfg or BackendConfig()
    penalty = penalty or PenaltyParams()
    if backend is None:
        backend = make_backend(cfg.backend)

    window_echo = None
    tasks: list[tuple[MetricKind, SubtreeSlice, list[EvalUnit], float]] = []
    if k is None:
        for metric in metrics:
            for s in atomic_slices(t, metric):
                units = extract_units(s, t, metric)
                if units:
                    tasks.append((metric, s, units, 0.0))
    else:
        w = compute_window(compute_stats(t), k)
        window_echo = {"low": w.low, "high": w.high, "k": w.k}
        slices = select_subtrees(t, w)
        pens = {s.slice_id: apply_penalty(s, w, penalty) for s in slices}
        for metric in metrics:
            for s in slices:
                units = extract_units(s, t, metric)
                if units:
                    tasks.append((metric, s, units, pens[s.slice_id]))

    def execute(task):
        metric, s, units, _pen = task
        return run_slice(
            s, units, metric, mode, cfg,
            variants=variants, rounds=rounds, seed=seed, backend=backend,
        )

    if cfg.parallelism > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            runs = list(pool.map(execute, tasks))
    else:
        runs = [execute(task) for task in tasks]

    per_metric: dict[str, MetricFragment] = {}
    all_usages: list[TokenUsage] = []
    for metric in metrics:
        samples: list[ScoreSample] = []
        calls: list[CallOutcome] = []
        pens: dict[str, float] = {}
        for (m, s, _units, pen), run in zip(tasks, runs):
            if m is not metric:
                continue
            samples.extend(run.samples)
            calls.extend(run.calls)
            pens[s.slice_id] = pen
        per_metric[metric.value] = aggregate(samples, pens, metric, calls)
        for c in calls:
            all_usages.extend(c.usages)

    invocations = len(all_usages)
    input_total = sum(u.input_tokens for u in all_usages)
    output_total = sum(u.output_tokens for u in all_usages)
    tokens = {
        "input_total": input_total,
        "output_total": output_total,
        "invocations": invocations,
        "input_per_call_mean": (input_total / invocations) if invocations else 0.0,
        "output_per_call_mean": (output_total / invocations) if invocations else 0.0,
    }

    echo = _echo(
        cfg,
        penalty,
        metrics=[m.value for m in metrics],
        k=k,
        mode=mode.value,
        variants=variants,
        rounds=rounds,
        seed=seed,
    )
    if extra_echo:
        echo.update(extra_echo)
    return RunReport(
        per_metric=per_metric, tokens=tokens, config_echo=echo, window=window_echo
    )
