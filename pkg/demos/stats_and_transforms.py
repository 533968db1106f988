"""
Parsing, structural statistics, and the three stress transforms
===============================================================

Run from the repository root:  python3 demos/stats_and_transforms.py
"""

import json

from taxolite import (
    TransformKind,
    TransformSpec,
    compute_stats,
    parse_taxonomy,
    serialize,
    transform,
)
from taxolite.taxonomy import TaxonomyFormat

# A small product catalog. Labels deliberately share tokens with their
# parents ("dairy food products" under "food products") so that the
# lexical-overlap demos elsewhere have something to latch onto.
DOC = json.dumps(
    {
        "name": "catalog",
        "children": [
            {
                "name": "food products",
                "children": [
                    {"name": "dairy food products"},
                    {"name": "frozen food products"},
                    {"name": "snack food products"},
                ],
            },
            {
                "name": "beauty products",
                "children": [
                    {"name": "skin care beauty products"},
                    {"name": "hair care beauty products"},
                ],
            },
        ],
    }
)

t = parse_taxonomy(DOC, TaxonomyFormat.NESTED_JSON)
stats = compute_stats(t)
print("original taxonomy")
for key, value in stats.to_dict().items():
    print(f"  {key:22s} {value}")

# --- Short: every leaf is re-hung directly below the root -------------------
short = transform(t, TransformSpec(TransformKind.SHORT))
print("\nafter Short (flattened):")
print(f"  height {compute_stats(short).height}  (was {stats.height})")

# --- Rand: children keep their labels but get random new parents ------------
for seed in (0, 1):
    rand = transform(t, TransformSpec(TransformKind.RAND, seed=seed))
    edges = sorted(
        (t.nodes[p].label, t.nodes[c].label)
        for p in rand.nodes
        for c in rand.nodes[p].child_ids
    )
    moved = sum(
        1
        for p, c in edges
        if (p, c)
        not in {
            (t.nodes[a].label, t.nodes[b].label)
            for a in t.nodes
            for b in t.nodes[a].child_ids
        }
    )
    print(f"  rand seed {seed}: {moved} of {len(edges)} edges re-attached")

# --- Reverse: parent/child flipped everywhere; the result is no longer a
# tree (the old root has no parent), so it serializes as an edge list --------
rev = transform(t, TransformSpec(TransformKind.REVERSE))
print("\nafter Reverse, first lines of the edge-list form:")
for line in serialize(rev, TaxonomyFormat.EDGE_LIST).decode().splitlines()[:4]:
    print(" ", line)
