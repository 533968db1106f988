"""Louvain community detection on undirected weighted graphs.

Greedy modularity optimization in the usual two phases: local node moves
until no single move improves modularity, then aggregation of communities
into super-nodes, repeated until the partition stops changing.  Node visit
order is shuffled with a caller-supplied seed and ties between equally good
target communities break toward the smallest community id, so results are
fully deterministic for (graph, seed).

Graphs are ``{node: {neighbor: weight}}`` with symmetric entries and optional
self-loops stored once; a self-loop adds twice its weight to the node degree
(the usual adjacency-matrix convention).
"""

from __future__ import annotations

import random

Graph = dict[str, dict[str, float]]


def degree(g: Graph, v: str) -> float:
    return sum(w for u, w in g[v].items() if u != v) + 2.0 * g[v].get(v, 0.0)


def modularity(g: Graph, communities: dict[str, int]) -> float:
    """Direct recomputation of Q for an arbitrary partition."""
    two_m = sum(degree(g, v) for v in g)
    if two_m == 0:
        return 0.0
    inside: dict[int, float] = {}
    total: dict[int, float] = {}
    for v in g:
        c = communities[v]
        total[c] = total.get(c, 0.0) + degree(g, v)
        for u, w in g[v].items():
            if communities.get(u) == c:
                # A_vv = 2w for self-loops; off-diagonal entries appear once
                # per direction in the symmetric dict
                inside[c] = inside.get(c, 0.0) + (2.0 * w if u == v else w)
    q = 0.0
    for c in total:
        q += inside.get(c, 0.0) / two_m - (total[c] / two_m) ** 2
    return q


def _local_moves(g: Graph, seed: int, trace: list[float]) -> dict[str, int]:
    """Phase 1: move nodes between communities while modularity improves.
    Appends Q to ``trace`` after every full sweep."""
    nodes = sorted(g)
    rng = random.Random(seed)
    rng.shuffle(nodes)

    community = {v: i for i, v in enumerate(sorted(g))}
    k = {v: degree(g, v) for v in g}
    two_m = sum(k.values())
    tot = {community[v]: 0.0 for v in g}
    for v in g:
        tot[community[v]] += k[v]

    improved = True
    while improved:
        improved = False
        for v in nodes:
            own = community[v]
            # weight from v to each neighboring community (self excluded)
            link: dict[int, float] = {}
            for u, w in g[v].items():
                if u == v:
                    continue
                link[community[u]] = link.get(community[u], 0.0) + w
            tot[own] -= k[v]
            community[v] = -1
            best_c, best_gain = own, link.get(own, 0.0) - tot[own] * k[v] / two_m
            for c in sorted(link):
                gain = link[c] - tot[c] * k[v] / two_m
                if gain > best_gain + 1e-12 or (
                    abs(gain - best_gain) <= 1e-12 and c < best_c
                ):
                    best_c, best_gain = c, gain
            community[v] = best_c
            tot[best_c] += k[v]
            if best_c != own:
                improved = True
        trace.append(modularity(g, community))
    return community


def _aggregate(g: Graph, communities: dict[str, int]) -> tuple[Graph, dict[str, int]]:
    """Phase 2: one super-node per community; intra-community weight becomes a
    self-loop.  Returns the reduced graph and node -> super-node mapping."""
    renumber: dict[int, int] = {}
    for v in sorted(communities):
        c = communities[v]
        if c not in renumber:
            renumber[c] = len(renumber)
    mapping = {v: renumber[communities[v]] for v in communities}

    reduced: Graph = {str(c): {} for c in range(len(renumber))}
    for v in g:
        cv = str(mapping[v])
        for u, w in g[v].items():
            cu = str(mapping[u])
            if v == u:
                reduced[cv][cv] = reduced[cv].get(cv, 0.0) + w
            elif v < u:  # count each undirected pair once
                if cv == cu:
                    reduced[cv][cv] = reduced[cv].get(cv, 0.0) + w
                else:
                    reduced[cv][cu] = reduced[cv].get(cu, 0.0) + w
                    reduced[cu][cv] = reduced[cu].get(cv, 0.0) + w
    return reduced, mapping


def louvain(g: Graph, seed: int = 0) -> tuple[dict[str, int], list[float]]:
    """Full Louvain: returns (node -> community id, modularity trace).

    The trace holds Q after every local-move sweep across all levels and is
    non-decreasing up to floating-point noise.  Community ids are compact
    integers numbered by first appearance over sorted node order.  An edgeless
    graph yields singleton communities and a trace of [0.0].
    """
    if not g:
        return {}, [0.0]
    if sum(degree(g, v) for v in g) == 0:
        order = sorted(g)
        return {v: i for i, v in enumerate(order)}, [0.0]

    trace: list[float] = []
    assignment = {v: v for v in g}  # original node -> current super-node
    level_graph = {v: dict(nbrs) for v, nbrs in g.items()}
    level_seed = seed
    while True:
        communities = _local_moves(level_graph, level_seed, trace)
        n_before = len(level_graph)
        level_graph, mapping = _aggregate(level_graph, communities)
        assignment = {v: str(mapping[s]) for v, s in assignment.items()}
        if len(level_graph) == n_before:
            break
        level_seed += 1

    # compact final ids, numbered by first appearance over sorted nodes
    final: dict[str, int] = {}
    renumber: dict[str, int] = {}
    for v in sorted(assignment):
        s = assignment[v]
        if s not in renumber:
            renumber[s] = len(renumber)
        final[v] = renumber[s]
    return final, trace
