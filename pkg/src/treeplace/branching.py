"""Splitting application graphs into placeable branches.

A branch is the unit the online engine places in one step: either the set of
pre-placed nodes (placed first, as its own application), or a maximal
connected set of unplaced nodes together with every edge touching it.  A
branch without unplaced junction nodes is a simple chain; one with junctions
needs candidate enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .graphs import AppGraph, IndexedTree

__all__ = ["BranchKind", "Branch", "NoPinnedAnchor", "split", "split_members",
           "split_at_junction"]


class NoPinnedAnchor(ValueError):
    """A branch has no placed attachment and no enumerable junction."""


class BranchKind(Enum):
    PINNED_SET = "pinned-set"
    SIMPLE = "simple"
    GENERAL = "general"


@dataclass(frozen=True)
class Branch:
    """A subgraph of the application to be placed as one unit.

    nodes  member app nodes (sorted).  For PINNED_SET these are the placed
           nodes themselves; otherwise they are unplaced.
    edges  app edge ids (child-node indices).  For member branches this
           includes attachment edges to placed neighbors.
    pins   placement of every placed node the branch touches.  A value of
           None marks a node placed at engine run time (an enumerated
           junction), resolved from the engine's lane context.
    unpinned_junctions  member junction nodes, ascending; empty for SIMPLE.
    source  the application the branch was cut from.
    """

    kind: BranchKind
    nodes: tuple[int, ...]
    edges: tuple[int, ...]
    pins: dict[int, int | None] = field(default_factory=dict)
    unpinned_junctions: tuple[int, ...] = ()
    source: AppGraph | None = None

    @property
    def top_junction(self) -> int:
        """The junction the enumeration fixes first: lowest app index."""
        if not self.unpinned_junctions:
            raise NoPinnedAnchor("branch has no unpinned junction")
        return self.unpinned_junctions[0]


def split_members(tree: IndexedTree, members: set[int], edge_ids: set[int],
                  pins: dict[int, int | None],
                  source: AppGraph | None = None) -> tuple[Branch | None, list[Branch]]:
    """Split a subgraph into the placed set and member branches.

    ``members`` are the unplaced nodes under consideration; ``edge_ids`` the
    edges (child indices) to distribute.  Every edge lands in exactly one
    branch: edges between two placed nodes go to the PINNED_SET branch, all
    others to the component of their unplaced endpoint.
    """
    placed = set(pins)
    pinned_edges = [c for c in edge_ids
                    if tree.parent[c] in placed and c in placed]

    # The placed application: all pre-placed nodes plus edges between them.
    pinned_branch = None
    pinned_members = sorted(placed)
    if pinned_members or pinned_edges:
        pinned_branch = Branch(
            BranchKind.PINNED_SET,
            tuple(pinned_members),
            tuple(sorted(pinned_edges)),
            {v: pins[v] for v in pinned_members},
            (),
            source,
        )

    # Connected components of the unplaced members.  comp[v] points at an
    # ancestor in the same component; members arrive in index order, so a
    # node's parent (when connected) is already classified.
    comp: dict[int, int] = {}
    for v in sorted(members):
        u = tree.parent[v]
        if v in edge_ids and u in members:
            comp[v] = comp[u]
        else:
            comp[v] = v
    groups: dict[int, list[int]] = {}
    for v in comp:
        root = comp[v]
        while root != comp[root]:
            root = comp[root]
        comp[v] = root
        groups.setdefault(root, []).append(v)

    branches = []
    for root in sorted(groups):
        nodes = sorted(groups[root])
        node_set = set(nodes)
        edges = sorted(
            c for c in edge_ids
            if c in node_set or (tree.parent[c] in node_set and c not in members)
        )
        touch_pins: dict[int, int | None] = {}
        for c in edges:
            u = tree.parent[c]
            if u in placed:
                touch_pins[u] = pins[u]
            if c in placed:
                touch_pins[c] = pins[c]
        junctions = tuple(v for v in nodes if len(tree.children[v]) >= 2)
        kind = BranchKind.GENERAL if junctions else BranchKind.SIMPLE
        branches.append(Branch(kind, tuple(nodes), tuple(edges), touch_pins,
                               junctions, source))
    return pinned_branch, branches


def split(app: AppGraph) -> list[Branch]:
    """Split a whole application into its ordered branch applications.

    The placed-node application comes first (it is placed before the member
    branches); member branches follow in ascending order of their lowest
    node.  The branches partition the app's edges.
    """
    tree = app.tree
    all_nodes = set(range(1, tree.node_count + 1))
    members = all_nodes - set(app.pinned)
    edge_ids = set(range(2, tree.node_count + 1))
    pins: dict[int, int | None] = dict(app.pinned)
    pinned_branch, branches = split_members(tree, members, edge_ids, pins, app)
    out: list[Branch] = []
    if pinned_branch is not None:
        out.append(pinned_branch)
    out.extend(branches)
    return out


def split_at_junction(tree: IndexedTree, branch: Branch, v: int) -> tuple[list[int], list[Branch]]:
    """Sub-branches of a general branch once junction v is regarded as placed.

    Returns the edges that now join two placed nodes (v's edges to its
    attachment pins, charged together with v itself) and the remaining
    branches in placement order.
    """
    members = set(branch.nodes) - {v}
    edge_ids = set(branch.edges)
    pins = dict(branch.pins)
    pins[v] = None  # resolved per lane by the engine
    pinned_branch, branches = split_members(tree, members, edge_ids, pins,
                                            branch.source)
    direct_edges = list(pinned_branch.edges) if pinned_branch is not None else []
    return direct_edges, branches
