"""The four quality metrics: unit extraction, input rendering, prompt building.

Each scoring call covers one metric over one slice.  Scoreable units are:

* SCA  - one concept label (is the name clear and precise?)
* HRR  - one parent->child edge (is the broader->narrower link sound?)
* HRE  - a parent with all its in-slice children (does the parent delimit
         the group against unrelated concepts?)
* HRI  - same neighborhood, >=2 children (do the children overlap each other?)

Units are rendered into a canonical, versioned JSON block; the prompt wraps
that block with scoring criteria and/or worked examples depending on the
ablation mode.  Criteria and exemplars are data files, not code, so they can
be audited and swapped without touching the pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import TYPE_CHECKING, Union

from .errors import EmptyUnits, MixedKinds
from .taxonomy import Taxonomy

if TYPE_CHECKING:  # pragma: no cover
    from .selection import SubtreeSlice

SCHEMA_VERSION = "lite/v1"


class MetricKind(Enum):
    SCA = "SCA"
    HRR = "HRR"
    HRE = "HRE"
    HRI = "HRI"

    @classmethod
    def from_string(cls, s: str) -> "MetricKind":
        try:
            return cls(s.strip().upper())
        except ValueError:
            raise ValueError(f"unknown metric {s!r}") from None


class PromptMode(Enum):
    FULL = "full"
    LLM_ONLY = "llm-only"
    NO_ICL = "no-icl"
    ZERO_SHOT = "zero-shot"

    @classmethod
    def from_string(cls, s: str) -> "PromptMode":
        try:
            return cls(s.strip().lower())
        except ValueError:
            raise ValueError(f"unknown prompt mode {s!r}") from None

    @property
    def includes_criteria(self) -> bool:
        return self in (PromptMode.FULL, PromptMode.ZERO_SHOT)

    @property
    def includes_exemplars(self) -> bool:
        return self in (PromptMode.FULL, PromptMode.NO_ICL)


@dataclass(frozen=True)
class Concept:
    label: str


@dataclass(frozen=True)
class Relation:
    parent_label: str
    child_label: str


@dataclass(frozen=True)
class Neighborhood:
    parent_label: str
    child_labels: tuple[str, ...]


Payload = Union[Concept, Relation, Neighborhood]

_PAYLOAD_FOR_KIND = {
    MetricKind.SCA: Concept,
    MetricKind.HRR: Relation,
    MetricKind.HRE: Neighborhood,
    MetricKind.HRI: Neighborhood,
}


@dataclass(frozen=True)
class EvalUnit:
    unit_id: str
    kind: MetricKind
    payload: Payload
    slice_id: str

    def __post_init__(self):
        expected = _PAYLOAD_FOR_KIND[self.kind]
        if not isinstance(self.payload, expected):
            raise TypeError(
                f"{self.kind.value} unit needs {expected.__name__}, "
                f"got {type(self.payload).__name__}"
            )


def extract_units(
    slice: "SubtreeSlice", t: Taxonomy, metric: MetricKind
) -> list[EvalUnit]:
    """Scoreable units of one slice, sorted by unit_id.

    Unit ids are derived from node ids (``sca:<node>``, ``hrr:<parent>:<child>``,
    ``hre:<parent>``, ``hri:<parent>``) so the same structural object keeps the
    same id across runs and can be joined with human annotations.  An empty
    result is legal (e.g. HRI over a chain).  Virtual nodes never produce
    units.
    """

    def real(nid: str) -> bool:
        return not t.nodes[nid].is_virtual

    units: list[EvalUnit] = []
    if metric is MetricKind.SCA:
        seen: set[str] = set()
        for parent, child in slice.edges:
            for nid in (parent, child):
                if nid not in seen:
                    seen.add(nid)
        if not slice.edges:
            seen.add(slice.anchor_id)
        for nid in seen:
            if not real(nid):
                continue
            units.append(
                EvalUnit(
                    unit_id=f"sca:{nid}",
                    kind=metric,
                    payload=Concept(t.nodes[nid].label),
                    slice_id=slice.slice_id,
                )
            )
    elif metric is MetricKind.HRR:
        for parent, child in slice.edges:
            if not (real(parent) and real(child)):
                continue
            units.append(
                EvalUnit(
                    unit_id=f"hrr:{parent}:{child}",
                    kind=metric,
                    payload=Relation(t.nodes[parent].label, t.nodes[child].label),
                    slice_id=slice.slice_id,
                )
            )
    else:
        min_children = 2 if metric is MetricKind.HRI else 1
        grouped: dict[str, list[str]] = {}
        for parent, child in slice.edges:
            if not (real(parent) and real(child)):
                continue
            grouped.setdefault(parent, []).append(child)
        tag = metric.value.lower()
        for parent, children in grouped.items():
            if len(children) < min_children:
                continue
            units.append(
                EvalUnit(
                    unit_id=f"{tag}:{parent}",
                    kind=metric,
                    payload=Neighborhood(
                        t.nodes[parent].label,
                        tuple(t.nodes[c].label for c in children),
                    ),
                    slice_id=slice.slice_id,
                )
            )
    units.sort(key=lambda u: u.unit_id)
    return units


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def payload_item(unit: EvalUnit) -> dict:
    p = unit.payload
    if isinstance(p, Concept):
        return {"id": unit.unit_id, "concept": p.label}
    if isinstance(p, Relation):
        return {"id": unit.unit_id, "parent": p.parent_label, "child": p.child_label}
    return {
        "id": unit.unit_id,
        "parent": p.parent_label,
        "children": list(p.child_labels),
    }


def _require_homogeneous(units: list[EvalUnit]) -> MetricKind:
    if not units:
        raise EmptyUnits("no units to render")
    kinds = {u.kind for u in units}
    if len(kinds) > 1:
        raise MixedKinds(f"mixed unit kinds: {sorted(k.value for k in kinds)}")
    return units[0].kind


def render_input(units: list[EvalUnit]) -> str:
    """Canonical one-line JSON for the scoring request: sorted keys, compact
    separators, version tag.  Same units (in the same order) always render to
    identical bytes."""
    kind = _require_homogeneous(units)
    doc = {
        "schema": SCHEMA_VERSION,
        "metric": kind.value,
        "items": [payload_item(u) for u in units],
    }
    return _canonical(doc)


# ---------------------------------------------------------------------------
# criteria + exemplars (data files)
# ---------------------------------------------------------------------------


def _data_text(relpath: str) -> str:
    return resources.files("taxolite").joinpath(relpath).read_text(encoding="utf-8")


def load_criteria(metric: MetricKind) -> str:
    return _data_text(f"data/criteria/{metric.value.lower()}.txt").strip()


def load_exemplars(metric: MetricKind) -> list[dict]:
    """Three worked examples per metric: {"input": …, "score": int, "reason": str}."""
    return json.loads(_data_text(f"data/exemplars/{metric.value.lower()}.json"))


# ---------------------------------------------------------------------------
# prompts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PromptBundle:
    mode: PromptMode
    system_text: str
    user_text: str
    unit_ids: tuple[str, ...]
    schema_version: str = SCHEMA_VERSION


_SYSTEM_TEXT = (
    "You are a meticulous judge of taxonomy quality. Score every item in the "
    "INPUT block on an integer scale from 1 (worst) to 10 (best) for the "
    "metric named in the input. Score each listed unit exactly once: one "
    "entry per input id, no duplicates, no omissions. Respond with JSON only, "
    'exactly in the form {"scores":[{"id":"<unit id>","score":<integer 1-10>,'
    '"reason":"<short justification>"}]} and no other text.'
)

CRITERIA_HEADER = "CRITERIA:"
EXAMPLES_HEADER = "EXAMPLES:"
INPUT_HEADER = "INPUT:"


def build_prompt(
    units: list[EvalUnit],
    metric: MetricKind,
    mode: PromptMode,
    criteria_text: str | None = None,
    exemplars: list[dict] | None = None,
) -> PromptBundle:
    """Compose the scoring prompt for one slice.

    Block layout by mode: full = criteria + examples + input; llm-only =
    input only; no-icl = examples + input; zero-shot = criteria + input.  The
    response-envelope instruction always lives in the system text — without
    it no mode could return parseable scores.  ``criteria_text``/``exemplars``
    default to the packaged data files.
    """
    kind = _require_homogeneous(units)
    if kind is not metric:
        raise MixedKinds(f"units are {kind.value}, prompt requested {metric.value}")

    blocks: list[str] = []
    if mode.includes_criteria:
        text = criteria_text if criteria_text is not None else load_criteria(metric)
        blocks.append(f"{CRITERIA_HEADER}\n{text.strip()}")
    if mode.includes_exemplars:
        shots = exemplars if exemplars is not None else load_exemplars(metric)
        lines = "\n".join(_canonical(shot) for shot in shots)
        blocks.append(f"{EXAMPLES_HEADER}\n{lines}")
    blocks.append(f"{INPUT_HEADER}\n{render_input(units)}")

    return PromptBundle(
        mode=mode,
        system_text=_SYSTEM_TEXT,
        user_text="\n\n".join(blocks),
        unit_ids=tuple(u.unit_id for u in units),
    )
