"""
Windowed evaluation end to end, on a deterministic mock judge
=============================================================

Run from the repository root:  python3 demos/evaluate_with_mock.py

The lexical-overlap mock scores a parent/child pair by shared label tokens,
so a taxonomy whose hierarchy matches its wording scores high — and the same
taxonomy with scrambled or reversed edges scores visibly lower.  That is the
whole pitch of structure-sensitive scoring, reproducible offline.
"""

import random

from taxolite import (
    BackendConfig,
    MetricKind,
    TransformKind,
    TransformSpec,
    compute_stats,
    compute_window,
    random_taxonomy,
    run_evaluation,
    transform,
)
from taxolite.taxonomy import ConceptNode, Mode, Taxonomy

POOL = ["frozen", "dairy", "snack", "skin", "hair", "paper", "desk", "bulk",
        "craft", "organic", "luxury", "travel", "winter", "garden"]


def token_faithful_tree(n_nodes, seed):
    """Random tree whose child labels extend their parent's label by one
    word, so hierarchy and wording agree — exactly what the lexical-overlap
    judge rewards."""
    skeleton = random_taxonomy(n_nodes, seed=seed)
    rng = random.Random(seed)
    labels = {skeleton.root_id: "products"}
    for nid, depth in sorted_by_depth(skeleton):
        if nid == skeleton.root_id:
            continue
        parent = next(p for p in skeleton.nodes
                      if nid in skeleton.nodes[p].child_ids)
        labels[nid] = f"{rng.choice(POOL)} {labels[parent]}"
    nodes = {
        nid: ConceptNode(id=nid, label=labels[nid],
                         child_ids=skeleton.nodes[nid].child_ids)
        for nid in skeleton.nodes
    }
    return Taxonomy(root_id=skeleton.root_id, nodes=nodes, mode=Mode.TREE)


def sorted_by_depth(t):
    depths = {t.root_id: 0}
    order = [t.root_id]
    for nid in order:
        for child in t.nodes[nid].child_ids:
            depths[child] = depths[nid] + 1
            order.append(child)
    return [(nid, depths[nid]) for nid in order]


t = token_faithful_tree(200, seed=4)
stats = compute_stats(t)
window = compute_window(stats, 1.0)
print(f"taxonomy: {stats.node_count} nodes, height {stats.height}")
print(f"window at k=1: [{window.low}, {window.high}] edges per slice")

cfg = BackendConfig(backend="mock:lexical-overlap")
report = run_evaluation(t, [MetricKind.HRR, MetricKind.HRE], k=1.0, cfg=cfg)
print("\nwindowed run")
for name, frag in sorted(report.per_metric.items()):
    print(f"  {name}: mean {frag.mean_score:.2f}  "
          f"success {frag.success_rate:.0%}  penalty {frag.penalty_total:+.2f}")
print(f"  tokens: {report.tokens['invocations']} calls, "
      f"{report.tokens['input_total']} input total, "
      f"{report.tokens['input_per_call_mean']:.0f} per call")

# atomic mode scores one edge / one neighborhood per call: smallest prompts,
# most calls, no window bookkeeping at all
atomic = run_evaluation(t, [MetricKind.HRR], k=None, cfg=cfg)
frag = atomic.per_metric["HRR"]
print("\natomic run")
print(f"  HRR: mean {frag.mean_score:.2f} over {frag.attempted_calls} calls")

print("\nsame metric after structural damage (atomic, lexical-overlap mock)")
for label, spec in [
    ("original", None),
    ("rand", TransformSpec(TransformKind.RAND, seed=0)),
    ("reverse", TransformSpec(TransformKind.REVERSE)),
]:
    variant = t if spec is None else transform(t, spec)
    rep = run_evaluation(variant, [MetricKind.HRR], k=None, cfg=cfg)
    print(f"  {label:9s} mean HRR {rep.per_metric['HRR'].mean_score:.2f}")
