"""
Traditional structure detectors on a deliberately broken taxonomy
=================================================================

Run from the repository root:  python3 demos/baseline_detectors.py
"""

from taxolite import (
    DETECTOR_NAMES,
    DetectorContext,
    HashEmbedding,
    Lexicon,
    LexiconKind,
    run_detector,
)
from taxolite.taxonomy import ConceptNode, Mode, Taxonomy

# Hand-built graph with one of everything wrong:
#   * "various snacks" hedges its label
#   * device <-> gadget form a 2-cycle
#   * root -> phone duplicates the longer root -> device -> phone path
#   * one edge uses a rare relation label
nodes = {
    "root": ConceptNode(id="root", label="catalog",
                        child_ids=("device", "food", "phone")),
    "device": ConceptNode(id="device", label="electronic device",
                          child_ids=("gadget", "phone")),
    "gadget": ConceptNode(id="gadget", label="electronic gadget",
                          child_ids=("device",)),
    "phone": ConceptNode(id="phone", label="mobile phone device"),
    "food": ConceptNode(id="food", label="food products",
                        child_ids=("snack", "dairy", "candy")),
    "snack": ConceptNode(id="snack", label="various snacks"),
    "dairy": ConceptNode(id="dairy", label="dairy food"),
    "candy": ConceptNode(id="candy", label="candy food",
                         relation_label="sold-with"),
}
t = Taxonomy(root_id="root", nodes=nodes, mode=Mode.DAG)

ctx = DetectorContext(
    fuzzy=Lexicon(frozenset({"various", "certain", "misc"}),
                  LexiconKind.FUZZY_WORDS),
    ontology=Lexicon(frozenset({"device", "food"}),
                     LexiconKind.DOMAIN_ONTOLOGY),
    emb=HashEmbedding(dimension=16, seed=0),
    threshold=0.5,
    seed=0,
)

print(f"{'detector':18s} {'score':>8s}  flagged items")
for name in DETECTOR_NAMES:
    try:
        res = run_detector(name, t, ctx)
    except Exception as exc:  # noqa: BLE001 - a demo wants to show the message
        print(f"{name:18s} {'-':>8s}  {type(exc).__name__}: {exc}")
        continue
    shown = ", ".join(item for item, _ in res.per_item[:3])
    print(f"{name:18s} {res.score:8.3f}  {shown or '-'}")
