"""Concept-taxonomy data model: parsing, validation, stats, transforms.

A taxonomy is a rooted directed graph of labeled concepts with parent->child
(hypernym->hyponym) edges.  Two wire formats are supported:

* nested JSON: ``{"name": str, "id"?: str, "children": [...]}`` (trees only;
  carries no relation labels)
* edge list: JSON Lines with a header ``{"root": id, "labels": {id: label}}``
  followed by ``{"parent": id, "child": id, "relation"?: str}`` lines

Tree mode is validated strictly (single parent, acyclic).  Dag mode is
deliberately permissive about cycles and self-loops: the whole point of the
quality detectors is to measure structural defects, so defective structures
must be representable.  All types are treated as immutable after construction;
operations are pure functions.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    CycleDetected,
    DuplicateId,
    EmptyTaxonomy,
    MalformedInput,
    UnreachableNode,
    UnsupportedMode,
)

#: Reserved id for the synthetic root added by the reverse transform.  A parsed
#: edge list whose root carries this id is treated as virtual again, so the
#: marker survives serialization round trips.
VIRTUAL_ROOT_ID = "__virtual_root__"

DEFAULT_RELATION = "is-a"


class Mode(Enum):
    TREE = "tree"
    DAG = "dag"


class TaxonomyFormat(Enum):
    NESTED_JSON = "nested-json"
    EDGE_LIST = "edge-list"


class TransformKind(Enum):
    RAND = "rand"
    REVERSE = "reverse"
    SHORT = "short"


@dataclass(frozen=True)
class ConceptNode:
    """One concept.  ``relation_label`` names the type of the node's incoming
    edge(s); the nested JSON format cannot carry it and defaults to "is-a"."""

    id: str
    label: str
    child_ids: tuple[str, ...] = ()
    relation_label: str = DEFAULT_RELATION
    is_virtual: bool = False


@dataclass(frozen=True)
class Taxonomy:
    root_id: str
    nodes: dict[str, ConceptNode]
    mode: Mode = Mode.TREE

    def edges(self):
        """Yield (parent_id, child_id) pairs in stored order."""
        for node in self.nodes.values():
            for child in node.child_ids:
                yield (node.id, child)

    @property
    def edge_count(self) -> int:
        return sum(len(n.child_ids) for n in self.nodes.values())

    def parent_map(self) -> dict[str, list[str]]:
        parents: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for parent, child in self.edges():
            parents[child].append(parent)
        return parents

    def relation_of_edge(self, parent_id: str, child_id: str) -> str:
        """Relation label of the edge parent->child (stored on the child)."""
        del parent_id
        return self.nodes[child_id].relation_label


@dataclass(frozen=True)
class TaxonomyStats:
    node_count: int
    edge_count: int
    height: int
    avg_out_degree: float
    zero_outdegree_ratio: float

    def to_dict(self) -> dict:
        return {
            "node_count": self.node_count,
            "edge_count": self.edge_count,
            "height": self.height,
            "avg_out_degree": self.avg_out_degree,
            "zero_outdegree_ratio": self.zero_outdegree_ratio,
        }


@dataclass(frozen=True)
class TransformSpec:
    kind: TransformKind
    seed: int = 0


def derive_id(label_path: list[str]) -> str:
    """Stable node id: first 16 hex chars of SHA-256 over the "/"-joined label
    path from the root.  Stable across runs, so derived ids can be joined with
    human-annotation files."""
    joined = "/".join(label_path)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def parse_taxonomy(
    data: bytes | str,
    fmt: TaxonomyFormat,
    mode: Mode | None = None,
) -> Taxonomy:
    """Parse and validate a taxonomy.

    ``mode=None`` infers the mode: inputs that satisfy the tree constraints
    come back as Tree, anything else as (permissive) Dag.  Passing
    ``mode=Mode.TREE`` enforces tree constraints and raises on violations.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedInput(f"input is not UTF-8: {exc}") from exc
    else:
        text = data

    if fmt is TaxonomyFormat.NESTED_JSON:
        taxonomy = _parse_nested_json(text, mode or Mode.TREE)
    elif fmt is TaxonomyFormat.EDGE_LIST:
        taxonomy = _parse_edge_list(text, mode)
    else:
        raise MalformedInput(f"unknown format: {fmt!r}")
    return taxonomy


def _parse_nested_json(text: str, mode: Mode) -> Taxonomy:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedInput("nested JSON root must be an object")

    nodes: dict[str, ConceptNode] = {}

    def node_id(entry: dict, path: list[str]) -> str:
        explicit = entry.get("id")
        if explicit is not None:
            if not isinstance(explicit, str) or not explicit:
                raise MalformedInput("node id must be a non-empty string")
            return explicit
        return derive_id(path)

    def label_of(entry: dict) -> str:
        label = entry.get("name")
        if not isinstance(label, str) or not label.strip():
            raise MalformedInput("every node needs a non-empty \"name\"")
        return label.strip()

    root_label = label_of(obj)
    root_id = node_id(obj, [root_label])
    # Document-order walk with an explicit stack; the tree depth is only
    # bounded by json.loads itself.
    stack: list[tuple[dict, list[str], str]] = [(obj, [root_label], root_id)]
    while stack:
        entry, path, nid = stack.pop()
        label = path[-1]
        children = entry.get("children", [])
        if not isinstance(children, list):
            raise MalformedInput(f"\"children\" of {label!r} must be a list")
        child_ids = []
        pending = []
        for child in children:
            if not isinstance(child, dict):
                raise MalformedInput("child entries must be objects")
            child_label = label_of(child)
            child_path = path + [child_label]
            cid = node_id(child, child_path)
            child_ids.append(cid)
            pending.append((child, child_path, cid))
        if nid in nodes:
            raise DuplicateId(f"duplicate node id {nid!r}")
        nodes[nid] = ConceptNode(id=nid, label=label, child_ids=tuple(child_ids))
        stack.extend(reversed(pending))

    taxonomy = Taxonomy(root_id=root_id, nodes=nodes, mode=mode)
    validate(taxonomy, mode)
    return taxonomy


def _parse_edge_list(text: str, mode: Mode | None) -> Taxonomy:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise EmptyTaxonomy("empty edge-list input")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid header line: {exc}") from exc
    if not isinstance(header, dict) or "root" not in header or "labels" not in header:
        raise MalformedInput("header line must contain \"root\" and \"labels\"")
    labels = header["labels"]
    if not isinstance(labels, dict):
        raise MalformedInput("\"labels\" must be an object")
    if not labels:
        raise EmptyTaxonomy("taxonomy has no nodes")
    root_id = header["root"]
    if root_id not in labels:
        raise MalformedInput(f"root {root_id!r} missing from labels")

    children: dict[str, list[str]] = {nid: [] for nid in labels}
    relations: dict[str, str] = {}
    seen_edges: set[tuple[str, str]] = set()
    for line in lines[1:]:
        try:
            edge = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"invalid edge line: {exc}") from exc
        if not isinstance(edge, dict) or "parent" not in edge or "child" not in edge:
            raise MalformedInput("edge lines need \"parent\" and \"child\"")
        parent, child = edge["parent"], edge["child"]
        if parent not in labels or child not in labels:
            raise MalformedInput(f"edge {parent!r}->{child!r} references unknown id")
        if (parent, child) in seen_edges:
            raise MalformedInput(f"duplicate edge {parent!r}->{child!r}")
        seen_edges.add((parent, child))
        children[parent].append(child)
        relation = edge.get("relation", DEFAULT_RELATION)
        if not isinstance(relation, str) or not relation:
            raise MalformedInput("\"relation\" must be a non-empty string")
        if child in relations and relations[child] != relation:
            # relation labels live on the child node, one per node
            raise MalformedInput(
                f"conflicting relation labels for incoming edges of {child!r}"
            )
        relations[child] = relation

    nodes: dict[str, ConceptNode] = {}
    for nid, label in labels.items():
        if not isinstance(label, str) or not label.strip():
            raise MalformedInput(f"label of {nid!r} is empty")
        nodes[nid] = ConceptNode(
            id=nid,
            label=label.strip(),
            child_ids=tuple(children[nid]),
            relation_label=relations.get(nid, DEFAULT_RELATION),
            is_virtual=(nid == VIRTUAL_ROOT_ID),
        )

    if mode is None:
        mode = _infer_mode(root_id, nodes)
    taxonomy = Taxonomy(root_id=root_id, nodes=nodes, mode=mode)
    validate(taxonomy, mode)
    return taxonomy


def _infer_mode(root_id: str, nodes: dict[str, ConceptNode]) -> Mode:
    try:
        _check_tree(root_id, nodes)
    except (CycleDetected, MalformedInput):
        return Mode.DAG
    return Mode.TREE


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate(t: Taxonomy, mode: Mode | None = None) -> None:
    """Validate structural invariants.

    Both modes require unique ids, duplicate-free child lists and full
    reachability from the root.  Tree mode additionally requires exactly one
    parent per non-root node and no cycles.  Dag mode admits cycles and
    self-loops so that defective inputs remain representable.
    """
    mode = mode or t.mode
    if not t.nodes:
        raise EmptyTaxonomy("taxonomy has no nodes")
    if t.root_id not in t.nodes:
        raise MalformedInput(f"root {t.root_id!r} is not a node")
    for node in t.nodes.values():
        if not node.label.strip():
            raise MalformedInput(f"label of {node.id!r} is empty")
        if len(set(node.child_ids)) != len(node.child_ids):
            raise MalformedInput(f"duplicate child ids under {node.id!r}")
        for child in node.child_ids:
            if child not in t.nodes:
                raise MalformedInput(f"unknown child id {child!r} under {node.id!r}")

    if mode is Mode.TREE:
        _check_tree(t.root_id, t.nodes)

    reachable = _reachable_from(t.root_id, t.nodes)
    if len(reachable) != len(t.nodes):
        missing = sorted(set(t.nodes) - reachable)
        raise UnreachableNode(f"nodes unreachable from root: {missing[:5]}")


def _check_tree(root_id: str, nodes: dict[str, ConceptNode]) -> None:
    # Cycle check first so inputs like a->b, b->a report CycleDetected rather
    # than a confusing parent-count error.
    _assert_acyclic(nodes)
    indegree: dict[str, int] = {nid: 0 for nid in nodes}
    for node in nodes.values():
        for child in node.child_ids:
            if child == node.id:
                raise CycleDetected(f"self-loop at {node.id!r}")
            indegree[child] += 1
    if indegree.get(root_id, 0) != 0:
        raise MalformedInput(f"tree root {root_id!r} has a parent")
    for nid, deg in indegree.items():
        if nid != root_id and deg != 1:
            raise MalformedInput(f"node {nid!r} has {deg} parents in tree mode")


def _assert_acyclic(nodes: dict[str, ConceptNode]) -> None:
    # Iterative three-color DFS; recursion would overflow on deep chains.
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {nid: WHITE for nid in nodes}
    for start in nodes:
        if color[start] != WHITE:
            continue
        stack: list[tuple[str, int]] = [(start, 0)]
        color[start] = GRAY
        while stack:
            nid, idx = stack[-1]
            children = nodes[nid].child_ids
            if idx < len(children):
                stack[-1] = (nid, idx + 1)
                child = children[idx]
                if color[child] == GRAY:
                    raise CycleDetected(f"cycle through {child!r}")
                if color[child] == WHITE:
                    color[child] = GRAY
                    stack.append((child, 0))
            else:
                color[nid] = BLACK
                stack.pop()


def _reachable_from(root_id: str, nodes: dict[str, ConceptNode]) -> set[str]:
    seen = {root_id}
    queue = deque([root_id])
    while queue:
        nid = queue.popleft()
        for child in nodes[nid].child_ids:
            if child not in seen:
                seen.add(child)
                queue.append(child)
    return seen


def bfs_depths(t: Taxonomy) -> dict[str, int]:
    """First-visit depth of every reachable node (root = 0), children in
    stored order."""
    depths = {t.root_id: 0}
    queue = deque([t.root_id])
    while queue:
        nid = queue.popleft()
        for child in t.nodes[nid].child_ids:
            if child not in depths:
                depths[child] = depths[nid] + 1
                queue.append(child)
    return depths


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------


def compute_stats(t: Taxonomy) -> TaxonomyStats:
    """Structural summary.

    Height counts node levels (a single node has height 1) along the longest
    root-to-leaf path.  The mean out-degree averages over internal nodes only
    (0.0 when there are none).  On graphs containing cycles the height falls
    back to BFS first-visit levels.
    """
    node_count = len(t.nodes)
    edge_count = t.edge_count
    internal = [n for n in t.nodes.values() if n.child_ids]
    avg_out = edge_count / len(internal) if internal else 0.0
    zero_ratio = (node_count - len(internal)) / node_count

    height = _height_levels(t)
    return TaxonomyStats(
        node_count=node_count,
        edge_count=edge_count,
        height=height,
        avg_out_degree=avg_out,
        zero_outdegree_ratio=zero_ratio,
    )


def _height_levels(t: Taxonomy) -> int:
    depths = bfs_depths(t)
    order = _topo_order(t, set(depths))
    if order is None:
        # cycle reachable from the root: fall back to BFS levels
        return max(depths.values()) + 1
    dist = {t.root_id: 0}
    for nid in order:
        for child in t.nodes[nid].child_ids:
            cand = dist.get(nid, 0) + 1
            if cand > dist.get(child, 0):
                dist[child] = cand
    return max(dist.values()) + 1


def _topo_order(t: Taxonomy, reachable: set[str]) -> list[str] | None:
    indeg = {nid: 0 for nid in reachable}
    for nid in reachable:
        for child in t.nodes[nid].child_ids:
            if child in reachable:
                indeg[child] += 1
    queue = deque(nid for nid, d in indeg.items() if d == 0)
    order = []
    while queue:
        nid = queue.popleft()
        order.append(nid)
        for child in t.nodes[nid].child_ids:
            if child in reachable:
                indeg[child] -= 1
                if indeg[child] == 0:
                    queue.append(child)
    if len(order) != len(reachable):
        return None
    return order


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def transform(t: Taxonomy, spec: TransformSpec) -> Taxonomy:
    """Structure perturbations used to probe evaluator sensitivity.

    ``Rand`` rebuilds a uniformly random recursive tree over the same nodes
    (seed-deterministic): node ids are shuffled and each one attaches to a
    uniformly chosen already-placed node.  ``Short`` flattens everything to
    depth 1 under the unchanged root.  ``Reverse`` transposes the edge set;
    the result is Dag mode, with a synthetic virtual root attached to the
    zero-in-degree nodes whenever no single natural root covers the graph.
    """
    if spec.kind is TransformKind.RAND:
        return _transform_rand(t, spec.seed)
    if spec.kind is TransformKind.SHORT:
        return _transform_short(t)
    if spec.kind is TransformKind.REVERSE:
        return _transform_reverse(t)
    raise UnsupportedMode(f"unknown transform {spec.kind!r}")


def _require_tree(t: Taxonomy, what: str) -> None:
    if t.mode is not Mode.TREE:
        raise UnsupportedMode(f"{what} transform requires Tree mode")


def _transform_rand(t: Taxonomy, seed: int) -> Taxonomy:
    _require_tree(t, "Rand")
    rng = random.Random(seed)
    order = sorted(t.nodes)
    rng.shuffle(order)
    children: dict[str, list[str]] = {nid: [] for nid in order}
    for i in range(1, len(order)):
        parent = order[rng.randrange(i)]
        children[parent].append(order[i])
    nodes = {
        nid: ConceptNode(
            id=nid,
            label=t.nodes[nid].label,
            child_ids=tuple(children[nid]),
            relation_label=t.nodes[nid].relation_label,
        )
        for nid in order
    }
    return Taxonomy(root_id=order[0], nodes=nodes, mode=Mode.TREE)


def _transform_short(t: Taxonomy) -> Taxonomy:
    _require_tree(t, "Short")
    others = sorted(nid for nid in t.nodes if nid != t.root_id)
    nodes = {}
    nodes[t.root_id] = ConceptNode(
        id=t.root_id,
        label=t.nodes[t.root_id].label,
        child_ids=tuple(others),
        relation_label=t.nodes[t.root_id].relation_label,
    )
    for nid in others:
        old = t.nodes[nid]
        nodes[nid] = ConceptNode(
            id=nid, label=old.label, child_ids=(), relation_label=old.relation_label
        )
    return Taxonomy(root_id=t.root_id, nodes=nodes, mode=Mode.TREE)


def _transform_reverse(t: Taxonomy) -> Taxonomy:
    real_ids = [nid for nid in t.nodes if not t.nodes[nid].is_virtual]
    real_set = set(real_ids)
    reversed_children: dict[str, list[str]] = {nid: [] for nid in real_ids}
    first_child_relation: dict[str, str] = {}
    indegree: dict[str, int] = {nid: 0 for nid in real_ids}
    for parent, child in t.edges():
        if parent not in real_set or child not in real_set:
            continue
        reversed_children[child].append(parent)
        indegree[parent] += 1
        # the reversed edge child->parent keeps the original edge's relation
        first_child_relation.setdefault(parent, t.nodes[child].relation_label)

    def build_nodes(root_children: list[str] | None) -> dict[str, ConceptNode]:
        built: dict[str, ConceptNode] = {}
        if root_children is not None:
            built[VIRTUAL_ROOT_ID] = ConceptNode(
                id=VIRTUAL_ROOT_ID,
                label="(virtual root)",
                child_ids=tuple(root_children),
                is_virtual=True,
            )
        for nid in real_ids:
            built[nid] = ConceptNode(
                id=nid,
                label=t.nodes[nid].label,
                child_ids=tuple(reversed_children[nid]),
                relation_label=first_child_relation.get(
                    nid, t.nodes[nid].relation_label
                ),
            )
        return built

    sources = sorted(nid for nid in real_ids if indegree[nid] == 0)
    if len(sources) == 1:
        covered = _cover(sources[0], reversed_children)
        if len(covered) == len(real_ids):
            return Taxonomy(root_id=sources[0], nodes=build_nodes(None), mode=Mode.DAG)

    # attach a virtual root; keep adding uncovered nodes until everything is
    # reachable (cyclic inputs can have no zero-in-degree node at all)
    root_children = list(sources)
    covered: set[str] = set()
    for nid in root_children:
        covered |= _cover(nid, reversed_children)
    for nid in sorted(real_ids):
        if nid not in covered:
            root_children.append(nid)
            covered |= _cover(nid, reversed_children)
    return Taxonomy(
        root_id=VIRTUAL_ROOT_ID, nodes=build_nodes(sorted(root_children)), mode=Mode.DAG
    )


def _cover(start: str, children: dict[str, list[str]]) -> set[str]:
    seen = {start}
    queue = deque([start])
    while queue:
        nid = queue.popleft()
        for child in children[nid]:
            if child not in seen:
                seen.add(child)
                queue.append(child)
    return seen


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def serialize(t: Taxonomy, fmt: TaxonomyFormat) -> bytes:
    """Canonical byte serialization: sorted keys, compact separators, stable
    edge order.  parse(serialize(t)) reproduces ids, labels and edges."""
    if fmt is TaxonomyFormat.NESTED_JSON:
        return _serialize_nested(t)
    if fmt is TaxonomyFormat.EDGE_LIST:
        return _serialize_edge_list(t)
    raise MalformedInput(f"unknown format: {fmt!r}")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _serialize_nested(t: Taxonomy) -> bytes:
    if t.mode is not Mode.TREE:
        raise UnsupportedMode("nested JSON requires Tree mode")
    # Build the nested dict bottom-up (post-order) to stay iterative; only
    # json.dumps itself limits the representable depth.
    built: dict[str, dict] = {}
    stack: list[tuple[str, bool]] = [(t.root_id, False)]
    while stack:
        nid, expanded = stack.pop()
        node = t.nodes[nid]
        if not expanded:
            stack.append((nid, True))
            for child in reversed(node.child_ids):
                stack.append((child, False))
        else:
            built[nid] = {
                "id": nid,
                "name": node.label,
                "children": [built[c] for c in node.child_ids],
            }
    return (_dumps(built[t.root_id]) + "\n").encode("utf-8")


def _bfs_node_order(t: Taxonomy) -> list[str]:
    order = []
    seen = {t.root_id}
    queue = deque([t.root_id])
    while queue:
        nid = queue.popleft()
        order.append(nid)
        for child in t.nodes[nid].child_ids:
            if child not in seen:
                seen.add(child)
                queue.append(child)
    for nid in sorted(t.nodes):
        if nid not in seen:
            order.append(nid)
    return order


def _serialize_edge_list(t: Taxonomy) -> bytes:
    labels = {nid: t.nodes[nid].label for nid in sorted(t.nodes)}
    lines = [_dumps({"labels": labels, "root": t.root_id})]
    for nid in _bfs_node_order(t):
        for child in t.nodes[nid].child_ids:
            edge = {"child": child, "parent": nid}
            relation = t.nodes[child].relation_label
            if relation != DEFAULT_RELATION:
                edge["relation"] = relation
            lines.append(_dumps(edge))
    return ("\n".join(lines) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# fixture helper
# ---------------------------------------------------------------------------


def random_taxonomy(
    n_nodes: int, seed: int, label_pool: list[str] | None = None
) -> Taxonomy:
    """Seed-deterministic uniform random recursive tree, handy for fixtures
    and demos.  Node i gets id ``n<i>`` and a pool label or ``concept <i>``."""
    if n_nodes < 1:
        raise EmptyTaxonomy("n_nodes must be >= 1")
    rng = random.Random(seed)
    ids = [f"n{i:04d}" for i in range(n_nodes)]
    children: dict[str, list[str]] = {nid: [] for nid in ids}
    for i in range(1, n_nodes):
        parent = ids[rng.randrange(i)]
        children[parent].append(ids[i])
    nodes = {}
    for i, nid in enumerate(ids):
        if label_pool:
            label = label_pool[i % len(label_pool)]
        else:
            label = f"concept {i:04d}"
        nodes[nid] = ConceptNode(id=nid, label=label, child_ids=tuple(children[nid]))
    return Taxonomy(root_id=ids[0], nodes=nodes, mode=Mode.TREE)
