"""Traditional structure checks for taxonomies.

Eight deterministic detectors, each reducing a taxonomy to one number plus
per-item evidence:

  detect-fuzzy      share of non-hedge tokens in labels
  detect-semantic   share of labels close to a domain lexicon (cosine > T)
  detect-reverse    share of edges without a same-relation reverse twin
  detect-cycle      share of edges outside strongly connected components
  detect-anomaly    chi-square of relation-label counts vs a baseline
  detect-cluster    share of parents whose children cluster cleanly (Ward)
  detect-redundant  share of edges that are not ancestor shortcuts
  detect-modular    negated share of nodes matching their neighborhood's
                    dominant community (Louvain)

Virtual placeholder roots (and their edges) are invisible to every detector:
they are bookkeeping, not content.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Callable

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .embeddings import cosine, label_vector, tokenize
from .errors import (
    EmptyLexicon,
    NoEdges,
    NoEligibleParents,
    ZeroBaseline,
)
from .louvain import louvain
from .tarjan import cyclic_edges
from .taxonomy import Taxonomy

class LexiconKind(Enum):
    FUZZY_WORDS = "fuzzy-words"
    DOMAIN_ONTOLOGY = "domain-ontology"


@dataclass(frozen=True)
class Lexicon:
    terms: frozenset[str]
    kind: LexiconKind

    def __post_init__(self):
        for term in self.terms:
            if not term or term != term.lower():
                raise ValueError(f"lexicon term {term!r} must be non-empty lowercase")

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, token: str) -> bool:
        return token.lower() in self.terms


def load_lexicon(text: str, kind: LexiconKind) -> Lexicon:
    """One term per line; ``#`` starts a comment; blank lines skipped."""
    terms = set()
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            terms.add(line.lower())
    return Lexicon(frozenset(terms), kind)


def default_fuzzy_lexicon() -> Lexicon:
    text = (
        resources.files("taxolite").joinpath("data/fuzzy_words.txt").read_text("utf-8")
    )
    return load_lexicon(text, LexiconKind.FUZZY_WORDS)


@dataclass(frozen=True)
class DetectorResult:
    name: str
    score: float
    per_item: tuple = ()
    params_echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "score": self.score,
            "per_item": [list(item) for item in self.per_item],
            "params_echo": dict(self.params_echo),
        }


def _real_nodes(t: Taxonomy) -> list:
    return [n for n in t.nodes.values() if not n.is_virtual]


def _real_edges(t: Taxonomy) -> list[tuple[str, str]]:
    return [(u, v) for u, v in t.edges() if not t.nodes[u].is_virtual]


def _edge_key(u: str, v: str) -> str:
    return f"{u}->{v}"


# ---------------------------------------------------------------- lexical


def detect_fuzzy(t: Taxonomy, fuzzy: Lexicon | None = None) -> DetectorResult:
    """Mean over nodes of (1 - hedge-token share) in the label."""
    if fuzzy is None:
        fuzzy = default_fuzzy_lexicon()
    if len(fuzzy) == 0:
        raise EmptyLexicon("fuzzy lexicon has no terms")
    per_item = []
    for node in _real_nodes(t):
        tokens = tokenize(node.label)
        if not tokens:
            ratio = 1.0
        else:
            hits = sum(1 for tok in tokens if tok in fuzzy)
            ratio = 1.0 - hits / len(tokens)
        per_item.append((node.id, ratio))
    score = sum(r for _, r in per_item) / len(per_item) if per_item else 1.0
    return DetectorResult(
        name="detect-fuzzy",
        score=score,
        per_item=tuple(per_item),
        params_echo={"lexicon_size": len(fuzzy)},
    )


def detect_semantic(
    t: Taxonomy,
    ontology: Lexicon,
    emb,
    threshold: float = 0.7,
) -> DetectorResult:
    """Mean over nodes of 1[max cosine(label, lexicon word) > threshold]."""
    if len(ontology) == 0:
        raise EmptyLexicon("domain lexicon has no terms")
    word_vectors = []
    for word in sorted(ontology.terms):
        vec = label_vector(word, emb)
        if vec is not None:
            word_vectors.append(vec)
    per_item = []
    for node in _real_nodes(t):
        vec = label_vector(node.label, emb)
        if vec is None or not word_vectors:
            best = 0.0
        else:
            best = max(cosine(vec, wv) for wv in word_vectors)
        per_item.append((node.id, 1.0 if best > threshold else 0.0))
    score = sum(f for _, f in per_item) / len(per_item) if per_item else 0.0
    return DetectorResult(
        name="detect-semantic",
        score=score,
        per_item=tuple(per_item),
        params_echo={"threshold": threshold, "lexicon_size": len(ontology)},
    )


# ---------------------------------------------------------------- edge logic


def detect_reverse(t: Taxonomy) -> DetectorResult:
    """1 - (edges whose exact reverse exists with the same relation) / edges."""
    edges = _real_edges(t)
    if not edges:
        raise NoEdges("taxonomy has no edges")
    edge_set = set(edges)
    flagged = []
    for u, v in edges:
        if (v, u) in edge_set and t.relation_of_edge(u, v) == t.relation_of_edge(v, u):
            flagged.append((_edge_key(u, v), 1.0))
    score = (len(edges) - len(flagged)) / len(edges)
    return DetectorResult(
        name="detect-reverse",
        score=score,
        per_item=tuple(flagged),
        params_echo={"edge_count": len(edges)},
    )


def detect_cycle(t: Taxonomy) -> DetectorResult:
    """1 - (edges inside strongly connected components) / edges."""
    edges = _real_edges(t)
    if not edges:
        raise NoEdges("taxonomy has no edges")
    adj: dict[str, list[str]] = {n.id: [] for n in _real_nodes(t)}
    for u, v in edges:
        adj[u].append(v)
    cyclic, _ = cyclic_edges(adj)
    flagged = [(_edge_key(u, v), 1.0) for u, v in edges if (u, v) in cyclic]
    score = (len(edges) - len(flagged)) / len(edges)
    return DetectorResult(
        name="detect-cycle",
        score=score,
        per_item=tuple(flagged),
        params_echo={"edge_count": len(edges)},
    )


def detect_redundant(t: Taxonomy) -> DetectorResult:
    """1 - (ancestor-shortcut edges) / edges.

    An edge (a, v) is a shortcut when v also has a parent p != a and a can
    reach p through the graph: the direct edge duplicates the longer path
    a => ... => p -> v and is the one flagged.
    """
    edges = _real_edges(t)
    if not edges:
        raise NoEdges("taxonomy has no edges")
    adj: dict[str, set[str]] = {n.id: set() for n in _real_nodes(t)}
    for u, v in edges:
        adj[u].add(v)

    reach_cache: dict[str, set[str]] = {}

    def reachable_from(start: str) -> set[str]:
        if start in reach_cache:
            return reach_cache[start]
        seen: set[str] = set()
        stack = [start]
        while stack:
            node = stack.pop()
            for nxt in adj[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        reach_cache[start] = seen
        return seen

    parents: dict[str, list[str]] = {}
    for u, v in edges:
        parents.setdefault(v, []).append(u)

    flagged = []
    for u, v in edges:
        others = [p for p in parents[v] if p != u]
        if any(p in reachable_from(u) for p in others):
            flagged.append((_edge_key(u, v), 1.0))
    score = (len(edges) - len(flagged)) / len(edges)
    return DetectorResult(
        name="detect-redundant",
        score=score,
        per_item=tuple(flagged),
        params_echo={"edge_count": len(edges)},
    )


# ---------------------------------------------------------------- statistics


def detect_anomaly(
    t: Taxonomy, baseline_freqs: dict[str, float] | None = None
) -> DetectorResult:
    """Chi-square of observed relation-label counts against a baseline.

    The baseline map is normalized to expected *counts* (scaled to the real
    edge total), so any positive weighting works.  When omitted, the baseline
    is uniform over the observed relation labels.  Zero, negative, or missing
    baseline mass for an observed label is an error.
    """
    edges = _real_edges(t)
    observed: dict[str, int] = {}
    for u, v in edges:
        rel = t.relation_of_edge(u, v)
        observed[rel] = observed.get(rel, 0) + 1

    if baseline_freqs is None:
        baseline_freqs = {rel: 1.0 for rel in observed}
    if any(w <= 0 for w in baseline_freqs.values()):
        raise ZeroBaseline("baseline frequencies must be positive")
    missing = set(observed) - set(baseline_freqs)
    if missing:
        raise ZeroBaseline(
            f"observed relation(s) absent from baseline: {sorted(missing)}"
        )

    total = len(edges)
    weight_sum = sum(baseline_freqs.values())
    per_item = []
    score = 0.0
    for rel in sorted(set(observed) | set(baseline_freqs)):
        expected = baseline_freqs.get(rel, 0.0) / weight_sum * total
        if expected == 0.0:
            continue  # unreachable given the checks above; defensive
        term = (observed.get(rel, 0) - expected) ** 2 / expected
        per_item.append((rel, term))
        score += term
    return DetectorResult(
        name="detect-anomaly",
        score=score,
        per_item=tuple(per_item),
        params_echo={"edge_count": total, "baseline": dict(sorted(baseline_freqs.items()))},
    )


def silhouette_score(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette over points; needs >= 2 clusters over >= 2 points.

    Singleton-cluster points score 0, matching the usual convention.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    n = len(points)
    uniq = np.unique(labels)
    if n < 2 or len(uniq) < 2:
        raise ValueError("silhouette needs >= 2 points in >= 2 clusters")
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    values = np.zeros(n)
    for i in range(n):
        same = labels == labels[i]
        n_same = int(same.sum())
        if n_same <= 1:
            values[i] = 0.0
            continue
        a = dist[i][same].sum() / (n_same - 1)
        b = min(dist[i][labels == c].mean() for c in uniq if c != labels[i])
        denom = max(a, b)
        values[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(values.mean())


def detect_cluster(t: Taxonomy, emb) -> DetectorResult:
    """Share of parents whose children form tight label clusters.

    Per parent with >= 3 embeddable children: Ward-link the child label
    vectors, sweep cluster counts k in [2, min(n-1, ceil(sqrt(n))+1)], and
    keep the best silhouette S_p.  Score = parents with S_p >= 0.5 / eligible
    parents.  Parents with too few embeddable children appear in per_item
    with a null contribution.
    """
    per_item: list[tuple[str, float | None]] = []
    counted = 0
    eligible = 0
    for node in _real_nodes(t):
        if not node.child_ids:
            continue
        vectors = []
        for cid in node.child_ids:
            vec = label_vector(t.nodes[cid].label, emb)
            if vec is not None:
                vectors.append(vec)
        if len(vectors) < 3:
            per_item.append((node.id, None))
            continue
        eligible += 1
        points = np.vstack(vectors)
        if np.allclose(points, points[0], atol=0.0):
            s_p = 0.0  # all children at one coordinate: no structure
        else:
            n = len(points)
            merges = linkage(points, method="ward")
            k_max = min(n - 1, math.ceil(math.sqrt(n)) + 1)
            s_p = -1.0
            for k in range(2, k_max + 1):
                labels = fcluster(merges, t=k, criterion="maxclust")
                if len(np.unique(labels)) < 2:
                    continue
                s_p = max(s_p, silhouette_score(points, labels))
        per_item.append((node.id, s_p))
        if s_p >= 0.5:
            counted += 1
    if eligible == 0:
        raise NoEligibleParents("no parent has >= 3 embeddable children")
    return DetectorResult(
        name="detect-cluster",
        score=counted / eligible,
        per_item=tuple(per_item),
        params_echo={"eligible_parents": eligible, "threshold": 0.5},
    )


def detect_modular(t: Taxonomy, seed: int = 0) -> DetectorResult:
    """Negated share of nodes agreeing with their neighborhood's community.

    Louvain runs on the undirected unweighted projection of the edges.  Each
    node with neighbors contributes 1 when its community equals the most
    common community among its neighbors (ties toward the smallest community
    id); isolated nodes contribute 0.  The sign follows the source formula,
    so values lie in [-1, 0] and -1 means maximal structural coupling.
    """
    nodes = _real_nodes(t)
    graph: dict[str, dict[str, float]] = {n.id: {} for n in nodes}
    for u, v in _real_edges(t):
        if u == v:
            continue  # self-loops say nothing about coupling between nodes
        graph[u][v] = 1.0
        graph[v][u] = 1.0
    communities, _trace = louvain(graph, seed=seed)

    agree = 0
    per_item = []
    for node in nodes:
        neighbors = sorted(graph[node.id])
        if not neighbors:
            per_item.append((node.id, 0.0))
            continue
        counts: dict[int, int] = {}
        for nb in neighbors:
            counts[communities[nb]] = counts.get(communities[nb], 0) + 1
        best = min(c for c in counts if counts[c] == max(counts.values()))
        hit = 1.0 if communities[node.id] == best else 0.0
        per_item.append((node.id, hit))
        agree += int(hit)
    score = -agree / len(nodes) if nodes else 0.0
    return DetectorResult(
        name="detect-modular",
        score=score,
        per_item=tuple(per_item),
        params_echo={"seed": seed, "communities": len(set(communities.values()))},
    )


# ---------------------------------------------------------------- dispatch


@dataclass
class DetectorContext:
    """Everything any detector might need, wired once by the caller."""

    fuzzy: Lexicon | None = None
    ontology: Lexicon | None = None
    emb: object | None = None
    threshold: float = 0.7
    baseline_freqs: dict[str, float] | None = None
    seed: int = 0


def _need(value, what: str, name: str):
    if value is None:
        raise ValueError(f"{name} requires {what}")
    return value


_DISPATCH: dict[str, Callable[[Taxonomy, DetectorContext], DetectorResult]] = {
    "fuzzy": lambda t, c: detect_fuzzy(t, c.fuzzy),
    "semantic": lambda t, c: detect_semantic(
        t,
        _need(c.ontology, "a domain lexicon (--ontology)", "detect-semantic"),
        _need(c.emb, "an embedding provider (--vectors)", "detect-semantic"),
        c.threshold,
    ),
    "reverse": lambda t, c: detect_reverse(t),
    "cycle": lambda t, c: detect_cycle(t),
    "anomaly": lambda t, c: detect_anomaly(t, c.baseline_freqs),
    "cluster": lambda t, c: detect_cluster(
        t, _need(c.emb, "an embedding provider (--vectors)", "detect-cluster")
    ),
    "redundant": lambda t, c: detect_redundant(t),
    "modular": lambda t, c: detect_modular(t, c.seed),
}

DETECTOR_NAMES = tuple(f"detect-{key}" for key in _DISPATCH)


def normalize_detector_name(name: str) -> str:
    """Canonical "detect-x" form; accepts bare and underscore spellings."""
    key = name.strip().lower().replace("_", "-")
    if key.startswith("detect-"):
        key = key[len("detect-") :]
    if key not in _DISPATCH:
        raise ValueError(
            f"unknown detector {name!r}; expected one of {', '.join(DETECTOR_NAMES)}"
        )
    return f"detect-{key}"


def run_detector(
    name: str, t: Taxonomy, ctx: DetectorContext | None = None
) -> DetectorResult:
    """Dispatch by name; accepts "detect-cycle", "cycle", or "detect_cycle"."""
    ctx = ctx or DetectorContext()
    key = normalize_detector_name(name)[len("detect-") :]
    return _DISPATCH[key](t, ctx)
