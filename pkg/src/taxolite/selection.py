"""Evaluation-slice selection: size window and breadth-first partition.

The window bounds how many edges one scoring call may cover:

    low  = round(avg_out_degree * height * k)
    high = round(avg_out_degree * height * 2k)

Slices are cut top-down: a subtree that fits the upper bound is emitted whole;
an oversized node contributes only its direct child edges and recursion
continues below.  Every edge lands in exactly one slice.  Atomic mode ignores
windows and yields minimal slices (a node, an edge, or one parent
neighborhood).  Sizes are measured in edges throughout; for a full subtree
that is node count minus one.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

from .errors import DegenerateStats, EmptyEdgeSet, UnsupportedMode
from .taxonomy import Mode, Taxonomy, TaxonomyStats, bfs_depths

if TYPE_CHECKING:  # pragma: no cover
    from .metrics import MetricKind


class SizeFlag(Enum):
    WITHIN = "within"
    OVER = "over"
    UNDER = "under"


@dataclass(frozen=True)
class SubtreeWindow:
    low: int
    high: int
    k: float | None = None  # None marks the atomic (windowless) regime

    def __post_init__(self):
        if self.low < 1 or self.high < self.low:
            raise ValueError(f"invalid window [{self.low}, {self.high}]")

    def flag_for(self, size: int) -> SizeFlag:
        if size > self.high:
            return SizeFlag.OVER
        if size < self.low:
            return SizeFlag.UNDER
        return SizeFlag.WITHIN


@dataclass(frozen=True)
class SubtreeSlice:
    slice_id: str
    anchor_id: str
    edges: tuple[tuple[str, str], ...]
    size_flag: SizeFlag
    depth_of_anchor: int

    @property
    def size(self) -> int:
        return len(self.edges)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def compute_window(stats: TaxonomyStats, k: float) -> SubtreeWindow:
    """Window bounds from taxonomy shape; round half up, floor at 1."""
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if stats.avg_out_degree <= 0:
        raise DegenerateStats("avg_out_degree is 0; the taxonomy has no edges")
    base = stats.avg_out_degree * stats.height
    low = max(1, _round_half_up(base * k))
    high = max(1, _round_half_up(base * 2 * k))
    return SubtreeWindow(low=low, high=high, k=float(k))


def _descendant_edge_counts(t: Taxonomy) -> dict[str, int]:
    """d(v) = number of edges in the full subtree rooted at v (iterative
    post-order; trees only, so no visited bookkeeping is needed)."""
    counts: dict[str, int] = {}
    stack: list[tuple[str, bool]] = [(t.root_id, False)]
    while stack:
        nid, expanded = stack.pop()
        node = t.nodes[nid]
        if not expanded:
            stack.append((nid, True))
            for child in node.child_ids:
                stack.append((child, False))
        else:
            counts[nid] = sum(1 + counts[c] for c in node.child_ids)
    return counts


def _subtree_edges(t: Taxonomy, anchor: str) -> tuple[tuple[str, str], ...]:
    edges = []
    queue = deque([anchor])
    while queue:
        nid = queue.popleft()
        for child in t.nodes[nid].child_ids:
            edges.append((nid, child))
            queue.append(child)
    return tuple(edges)


def select_subtrees(t: Taxonomy, w: SubtreeWindow) -> list[SubtreeSlice]:
    """Partition the tree's edges into slices, breadth-first from the root.

    A dequeued node whose full descendant edge count fits under the upper
    bound becomes one whole-subtree slice (flagged Under when below the lower
    bound).  An oversized node yields a shallow slice of just its child edges
    (flag judged on the child count) and its children are enqueued, so
    grandchild edges are cut further down rather than duplicated.
    """
    if t.mode is not Mode.TREE:
        raise UnsupportedMode("slice selection requires Tree mode")
    if t.edge_count == 0:
        raise EmptyEdgeSet("taxonomy has no edges to slice")

    d = _descendant_edge_counts(t)
    slices: list[SubtreeSlice] = []
    queue = deque([(t.root_id, 0)])
    while queue:
        nid, depth = queue.popleft()
        size = d[nid]
        if size == 0:
            continue
        if size <= w.high:
            flag = SizeFlag.UNDER if size < w.low else SizeFlag.WITHIN
            slices.append(
                SubtreeSlice(
                    slice_id=f"sub:{nid}",
                    anchor_id=nid,
                    edges=_subtree_edges(t, nid),
                    size_flag=flag,
                    depth_of_anchor=depth,
                )
            )
        else:
            children = t.nodes[nid].child_ids
            slices.append(
                SubtreeSlice(
                    slice_id=f"shallow:{nid}",
                    anchor_id=nid,
                    edges=tuple((nid, c) for c in children),
                    size_flag=w.flag_for(len(children)),
                    depth_of_anchor=depth,
                )
            )
            for child in children:
                queue.append((child, depth + 1))
    return slices


def atomic_slices(t: Taxonomy, metric: "MetricKind") -> list[SubtreeSlice]:
    """Minimal windowless slices: per node (SCA), per edge (HRR), or per
    internal node's direct children (HRE/HRI).  Always flagged Within —
    penalties do not apply in atomic mode.  The synthetic virtual root and its
    edges are never scoreable and are skipped."""
    from .metrics import MetricKind

    depths = bfs_depths(t)
    order = list(depths)  # BFS visit order
    slices: list[SubtreeSlice] = []

    def real(nid: str) -> bool:
        return not t.nodes[nid].is_virtual

    if metric is MetricKind.SCA:
        for nid in order:
            if not real(nid):
                continue
            slices.append(
                SubtreeSlice(
                    slice_id=f"atom:sca:{nid}",
                    anchor_id=nid,
                    edges=(),
                    size_flag=SizeFlag.WITHIN,
                    depth_of_anchor=depths[nid],
                )
            )
    elif metric is MetricKind.HRR:
        for nid in order:
            if not real(nid):
                continue
            for child in t.nodes[nid].child_ids:
                if not real(child):
                    continue
                slices.append(
                    SubtreeSlice(
                        slice_id=f"atom:hrr:{nid}:{child}",
                        anchor_id=nid,
                        edges=((nid, child),),
                        size_flag=SizeFlag.WITHIN,
                        depth_of_anchor=depths[nid],
                    )
                )
    elif metric in (MetricKind.HRE, MetricKind.HRI):
        tag = metric.value.lower()
        for nid in order:
            if not real(nid):
                continue
            children = [c for c in t.nodes[nid].child_ids if real(c)]
            if not children:
                continue
            slices.append(
                SubtreeSlice(
                    slice_id=f"atom:{tag}:{nid}",
                    anchor_id=nid,
                    edges=tuple((nid, c) for c in children),
                    size_flag=SizeFlag.WITHIN,
                    depth_of_anchor=depths[nid],
                )
            )
    else:  # pragma: no cover - exhaustive enum
        raise ValueError(f"unknown metric {metric!r}")
    return slices
