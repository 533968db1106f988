"""Shared fixture builders for the test suite."""

import json

from taxolite.selection import SizeFlag, SubtreeSlice
from taxolite.taxonomy import VIRTUAL_ROOT_ID, ConceptNode, Mode, Taxonomy


def build(root, children, mode=Mode.TREE):
    """Taxonomy literal from a {parent: [children]} dict; labels = ids."""
    ids = set(children)
    for kids in children.values():
        ids.update(kids)
    nodes = {
        nid: ConceptNode(id=nid, label=nid, child_ids=tuple(children.get(nid, ())))
        for nid in sorted(ids)
    }
    return Taxonomy(root_id=root, nodes=nodes, mode=mode)


def labeled(root, children, labels, mode=Mode.TREE):
    """Like build() but with explicit id->label mapping."""
    ids = set(children) | {c for kids in children.values() for c in kids}
    nodes = {
        nid: ConceptNode(
            id=nid, label=labels[nid], child_ids=tuple(children.get(nid, ()))
        )
        for nid in sorted(ids)
    }
    return Taxonomy(root_id=root, nodes=nodes, mode=mode)


def edge_list_text(root, labels, edges):
    lines = [json.dumps({"root": root, "labels": labels})]
    for e in edges:
        lines.append(json.dumps(e))
    return "\n".join(lines) + "\n"


def digraph_taxonomy(adj, labels=None, relation="is-a", relations=None):
    """Arbitrary digraph wrapped as a Dag-mode taxonomy.

    A virtual root points at every node so the structure is rooted no matter
    how disconnected or cyclic the digraph is; detectors ignore the virtual
    node and its edges, leaving exactly the digraph's own edges in play.
    ``relations`` overrides the incoming-edge relation per node id.
    """
    labels = labels or {}
    relations = relations or {}
    names = sorted(adj)
    nodes = {
        VIRTUAL_ROOT_ID: ConceptNode(
            id=VIRTUAL_ROOT_ID,
            label="root",
            child_ids=tuple(names),
            is_virtual=True,
        )
    }
    for nid in names:
        nodes[nid] = ConceptNode(
            id=nid,
            label=labels.get(nid, nid),
            child_ids=tuple(adj[nid]),
            relation_label=relations.get(nid, relation),
        )
    return Taxonomy(root_id=VIRTUAL_ROOT_ID, nodes=nodes, mode=Mode.DAG)


def whole_slice(t):
    """Single slice covering every edge of t (anchor = root)."""
    return SubtreeSlice(
        slice_id="sub:whole",
        anchor_id=t.root_id,
        edges=tuple(t.edges()),
        size_flag=SizeFlag.WITHIN,
        depth_of_anchor=0,
    )
