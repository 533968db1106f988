"""Iterative Tarjan strongly-connected components.

Explicit-stack formulation so deep chains (thousands of nodes) cannot hit the
interpreter recursion limit.  Node order follows the adjacency dict, making
component order deterministic for a given input.
"""

from __future__ import annotations


def strongly_connected_components(adj: dict[str, list[str]]) -> list[list[str]]:
    """SCCs of a digraph given as {node: [successors]}.  Every key must exist
    for every successor.  Returns components in reverse-topological completion
    order; nodes inside a component keep pop order."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    components: list[list[str]] = []
    counter = 0

    for start in adj:
        if start in index:
            continue
        work: list[tuple[str, int]] = [(start, 0)]
        while work:
            v, i = work[-1]
            if i == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            descended = False
            successors = adj[v]
            while i < len(successors):
                w = successors[i]
                i += 1
                if w not in index:
                    work[-1] = (v, i)
                    work.append((w, 0))
                    descended = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if descended:
                continue
            work.pop()
            if low[v] == index[v]:
                component = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    component.append(w)
                    if w == v:
                        break
                components.append(component)
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return components


def cyclic_edges(
    adj: dict[str, list[str]]
) -> tuple[set[tuple[str, str]], list[list[str]]]:
    """Edges lying on some directed cycle: both endpoints in one SCC of size
    >= 2, or a self-loop.  Returns (edge set, the SCC list)."""
    components = strongly_connected_components(adj)
    comp_of: dict[str, int] = {}
    for ci, comp in enumerate(components):
        for node in comp:
            comp_of[node] = ci
    sizes = [len(c) for c in components]
    bad: set[tuple[str, str]] = set()
    for u, successors in adj.items():
        for v in successors:
            if u == v or (comp_of[u] == comp_of[v] and sizes[comp_of[u]] >= 2):
                bad.add((u, v))
    return bad, components
