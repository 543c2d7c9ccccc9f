"""JSON file formats for graphs and cost matrices.

An application file holds the tree (``nodes`` count plus ``edges`` as
[parent, child] pairs), optional per-node ``demands`` (K values each),
optional per-edge ``edge_demands`` aligned with the edge list, an optional
``pinned`` map, and optional ``node_cost`` / ``edge_cost`` blocks.  A
physical file holds the tree and optional ``capacities``.  The string token
"inf" encodes an infinite entry anywhere in a numeric block.

Loading normalizes: nodes are re-indexed breadth-first when the labels do
not already satisfy parent < child, and a directed pair of edges between the
same nodes is merged into one undirected edge with summed demand and summed
costs.  Saving writes the canonical form, so canonical files round-trip
losslessly.

Cost blocks reference the physical topology: ``node_cost`` is V x N x K;
``edge_cost.links`` is E x L with links in canonical order (ascending child
index, i.e. physical nodes 2..N); ``edge_cost.self`` is E x N.  Edge rows
follow the file's edge list order.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

from .costs import CostModel
from .graphs import AppGraph, IndexedTree, PhysGraph, build_tree

__all__ = [
    "load_app_graph",
    "save_app_graph",
    "load_phys_graph",
    "save_phys_graph",
]


def _decode_scalar(x: Any) -> float:
    if isinstance(x, str):
        if x == "inf":
            return math.inf
        raise ValueError(f"unexpected token {x!r} in numeric block")
    return float(x)


def _decode_array(block: Any) -> np.ndarray:
    arr = np.asarray(
        [[_decode_scalar(x) for x in row] if isinstance(row, list) else _decode_scalar(row)
         for row in block],
        dtype=np.float64,
    )
    return arr


def _encode_array(arr: np.ndarray) -> list:
    def enc(x: float):
        return "inf" if math.isinf(x) else float(x)

    if arr.ndim == 1:
        return [enc(float(x)) for x in arr]
    return [_encode_array(row) for row in arr]


def _build_with_merge(data: dict) -> tuple[IndexedTree, list[tuple[int, int]], list[list[int]]]:
    """Build the tree, merging directed edge pairs.

    Returns (tree, unique undirected edges in file order, and for each the
    list of file edge indices merged into it).
    """
    raw_edges = [tuple(e) for e in data.get("edges", [])]
    seen: dict[frozenset, int] = {}
    unique: list[tuple[int, int]] = []
    merged_from: list[list[int]] = []
    for idx, (a, b) in enumerate(raw_edges):
        key = frozenset((a, b))
        if key in seen:
            merged_from[seen[key]].append(idx)
        else:
            seen[key] = len(unique)
            unique.append((a, b))
            merged_from.append([idx])
    tree = build_tree(int(data["nodes"]), unique)
    return tree, unique, merged_from


def load_app_graph(source: str | dict) -> tuple[AppGraph, CostModel | None]:
    """Load an application graph (and its cost model, when present)."""
    data = json.loads(open(source).read()) if isinstance(source, str) else source
    tree, unique, merged_from = _build_with_merge(data)
    v = tree.node_count
    relabel = tree.relabeling or {i: i for i in range(1, v + 1)}

    k = 1
    if "demands" in data:
        k = len(data["demands"][0])
    demands = np.zeros((v, k))
    if "demands" in data:
        for old in range(1, v + 1):
            demands[relabel[old] - 1] = [_decode_scalar(x) for x in data["demands"][old - 1]]

    # Canonical edge id of each unique file edge: the child endpoint after
    # relabeling (either endpoint of the pair that is not the other's parent).
    def canon_edge(a: int, b: int) -> int:
        ra, rb = relabel[a], relabel[b]
        return rb if tree.parent[rb] == ra else ra

    edge_demands = np.zeros(max(v - 1, 0))
    if "edge_demands" in data:
        raw = [_decode_scalar(x) for x in data["edge_demands"]]
        for uidx, (a, b) in enumerate(unique):
            c = canon_edge(a, b)
            edge_demands[c - 2] = sum(raw[i] for i in merged_from[uidx])

    pinned = {relabel[int(node)]: int(target)
              for node, target in data.get("pinned", {}).items()}
    app = AppGraph(tree, demands, edge_demands, pinned)

    model = None
    if "node_cost" in data or "edge_cost" in data:
        nc_block = data.get("node_cost")
        n = len(nc_block[0]) if nc_block else len(data["edge_cost"]["self"][0])
        model_nc = np.zeros((v + 1, n + 1, k))
        if nc_block:
            for old in range(1, v + 1):
                model_nc[relabel[old], 1:, :] = _decode_array(nc_block[old - 1]).reshape(n, k)
        model_ec = np.zeros((v + 1, n + 1))
        model_sc = np.zeros((v + 1, n + 1))
        if "edge_cost" in data:
            links = data["edge_cost"].get("links")
            selfs = data["edge_cost"].get("self")
            for uidx, (a, b) in enumerate(unique):
                c = canon_edge(a, b)
                for i in merged_from[uidx]:
                    if links:
                        model_ec[c, 2:] += _decode_array(links[i])
                    if selfs:
                        model_sc[c, 1:] += _decode_array(selfs[i])
        model = CostModel(model_nc, model_ec, model_sc)
    return app, model


def save_app_graph(app: AppGraph, model: CostModel | None = None,
                   path: str | None = None) -> dict:
    """Canonical JSON form of an application graph; optionally written out."""
    v = app.node_count
    data: dict[str, Any] = {
        "nodes": v,
        "edges": [[p, c] for p, c in app.tree.edges()],
        "demands": _encode_array(app.demands),
        "edge_demands": _encode_array(app.edge_demands),
    }
    if app.pinned:
        data["pinned"] = {str(k): int(t) for k, t in sorted(app.pinned.items())}
    if model is not None:
        data["node_cost"] = [_encode_array(model.node_cost[i, 1:, :]) for i in range(1, v + 1)]
        data["edge_cost"] = {
            "links": [_encode_array(model.edge_cost[c, 2:]) for c in range(2, v + 1)],
            "self": [_encode_array(model.self_cost[c, 1:]) for c in range(2, v + 1)],
        }
    if path is not None:
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1)
    return data


def load_phys_graph(source: str | dict) -> PhysGraph:
    data = json.loads(open(source).read()) if isinstance(source, str) else source
    tree, _unique, _merged = _build_with_merge(data)
    node_cap = None
    link_cap = None
    caps = data.get("capacities")
    if caps:
        if "node" in caps:
            node_cap = _decode_array(caps["node"])
            if node_cap.ndim == 1:
                node_cap = node_cap.reshape(-1, 1)
        if "link" in caps:
            link_cap = np.asarray([_decode_scalar(x) for x in caps["link"]])
    return PhysGraph(tree, node_cap, link_cap)


def save_phys_graph(phys: PhysGraph, path: str | None = None) -> dict:
    data: dict[str, Any] = {
        "nodes": phys.node_count,
        "edges": [[p, c] for p, c in phys.tree.edges()],
    }
    caps = {}
    if phys.node_capacity is not None:
        caps["node"] = _encode_array(phys.node_capacity)
    if phys.link_capacity is not None:
        caps["link"] = _encode_array(phys.link_capacity)
    if caps:
        data["capacities"] = caps
    if path is not None:
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1)
    return data
