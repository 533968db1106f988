"""
Comparing machine scores against human annotators
=================================================

Run from the repository root:  python3 demos/correlation_analysis.py

Three synthetic annotators rate the same parent->child units a mock judge
scored; we join the two sets, compute Pearson r per metric and Fleiss' kappa
across annotators, and render the combined report.
"""

import json
import random

from taxolite import (
    BackendConfig,
    HumanAnnotationSet,
    MetricKind,
    correlate,
    parse_taxonomy,
    render_report,
    run_evaluation,
)
from taxolite.taxonomy import TaxonomyFormat

DOC = json.dumps(
    {
        "name": "catalog",
        "children": [
            {"name": "food products", "children": [
                {"name": "dairy food products"},
                {"name": "frozen food products"}]},
            {"name": "beauty products", "children": [
                {"name": "skin care beauty products"},
                {"name": "lawnmower"}]},  # the odd one out
        ],
    }
)
t = parse_taxonomy(DOC, TaxonomyFormat.NESTED_JSON)
report = run_evaluation(
    t, [MetricKind.HRR], k=None, cfg=BackendConfig(backend="mock:lexical-overlap")
)

# annotators roughly agree with the machine, each with private jitter
rng = random.Random(7)
lines = []
for unit_id, machine in sorted(report.per_metric["HRR"].pooled_unit_means.items()):
    for annotator in ("r1", "r2", "r3"):
        noisy = max(1, min(10, round(machine + rng.gauss(0, 1))))
        lines.append(json.dumps(
            {"unit_id": unit_id, "annotator": annotator, "score": noisy}
        ))
human = HumanAnnotationSet.from_jsonl("\n".join(lines))

corr = correlate(report, human)
hrr = corr.per_metric["HRR"]
print(f"joined units: {hrr['n']}")
print(f"Pearson r (machine vs mean human): {hrr['pearson_r']:.3f}")
print(f"Fleiss kappa across annotators:    {corr.kappa:.3f}")
print(f"disputed units (spread > 2):       {list(corr.disputes) or 'none'}")

print("\nmarkdown rendering:\n")
print(render_report(report, corr, format="markdown").decode())
