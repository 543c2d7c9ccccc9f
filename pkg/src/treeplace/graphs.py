"""Rooted tree graphs with order-preserving indices, plus path and junction queries.

Both application graphs and physical topologies share the same tree shape:
nodes are numbered 1..n with the root at index 1, and every parent index is
strictly smaller than its child's index.  That ordering is what makes the
cycle-free placement rule checkable locally (a path that climbs above its
starting node must visit a smaller index), so it is enforced at construction
time and never revisited.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TreeError",
    "CycleDetected",
    "Disconnected",
    "DuplicateParent",
    "InvalidIndex",
    "IndexedTree",
    "AppGraph",
    "PhysGraph",
    "Junction",
    "JunctionReport",
    "build_tree",
    "tree_path",
    "junction_analysis",
]


class TreeError(ValueError):
    """Base class for malformed tree inputs."""


class CycleDetected(TreeError):
    pass


class Disconnected(TreeError):
    pass


class DuplicateParent(TreeError):
    pass


class InvalidIndex(IndexError):
    pass


@dataclass(frozen=True)
class IndexedTree:
    """Rooted tree on nodes 1..node_count with parent index < child index.

    ``parent[v]`` is the parent of node v (0 for the root), ``children[v]``
    lists v's children in ascending order.  ``relabeling`` translates the
    caller's original labels to the canonical indices when ``build_tree`` had
    to re-index (None when the input already satisfied the ordering).

    Instances are immutable and safe to share across threads.
    """

    node_count: int
    parent: tuple[int, ...]
    children: tuple[tuple[int, ...], ...]
    relabeling: dict[int, int] | None = None
    # Euler-tour intervals for O(1) ancestor tests, filled in __post_init__.
    _tin: tuple[int, ...] = field(default=(), repr=False, compare=False)
    _tout: tuple[int, ...] = field(default=(), repr=False, compare=False)
    _depth: tuple[int, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self) -> None:
        n = self.node_count
        tin = [0] * (n + 1)
        tout = [0] * (n + 1)
        depth = [0] * (n + 1)
        clock = 0
        stack: list[tuple[int, bool]] = [(1, False)]
        while stack:
            node, done = stack.pop()
            if done:
                tout[node] = clock
                continue
            clock += 1
            tin[node] = clock
            stack.append((node, True))
            for c in reversed(self.children[node]):
                depth[c] = depth[node] + 1
                stack.append((c, False))
        object.__setattr__(self, "_tin", tuple(tin))
        object.__setattr__(self, "_tout", tuple(tout))
        object.__setattr__(self, "_depth", tuple(depth))

    # -- queries -------------------------------------------------------

    def check_index(self, n: int) -> None:
        if not 1 <= n <= self.node_count:
            raise InvalidIndex(f"node {n} outside 1..{self.node_count}")

    def depth(self, n: int) -> int:
        self.check_index(n)
        return self._depth[n]

    def is_ancestor_or_self(self, a: int, b: int) -> bool:
        """True when a lies on the path from the root to b (inclusive)."""
        self.check_index(a)
        self.check_index(b)
        return self._tin[a] <= self._tin[b] and self._tout[b] <= self._tout[a]

    def subtree(self, n: int) -> list[int]:
        """All nodes in the subtree rooted at n, in ascending index order."""
        self.check_index(n)
        tin, tout = self._tin, self._tout
        return [m for m in range(1, self.node_count + 1)
                if tin[n] <= tin[m] and tout[m] <= tout[n]]

    def edges(self) -> list[tuple[int, int]]:
        """Edge list as (parent, child) pairs, ordered by child index."""
        return [(self.parent[c], c) for c in range(2, self.node_count + 1)]

    def parent_array(self) -> np.ndarray:
        """Parent indices as an int32 array with a zero sentinel at slot 0."""
        return np.asarray(self.parent, dtype=np.int32)


def build_tree(node_count: int, parent_edges: Iterable[tuple[int, int]]) -> IndexedTree:
    """Construct an IndexedTree from (parent, child) edges over arbitrary labels.

    Labels must be 1..node_count.  If the edges already satisfy
    parent < child they are kept verbatim; otherwise the nodes are re-indexed
    breadth-first from the root and the translation is recorded in
    ``relabeling`` (original label -> canonical index).

    Raises CycleDetected, Disconnected or DuplicateParent on malformed input.
    """
    if node_count < 1:
        raise TreeError("node_count must be >= 1")
    edges = list(parent_edges)
    parent_of: dict[int, int] = {}
    for p, c in edges:
        if not (1 <= p <= node_count and 1 <= c <= node_count):
            raise InvalidIndex(f"edge ({p},{c}) outside 1..{node_count}")
        if p == c:
            raise CycleDetected(f"self-loop on node {p}")
        if c in parent_of:
            raise DuplicateParent(f"node {c} has parents {parent_of[c]} and {p}")
        parent_of[c] = p
    if len(edges) < node_count - 1:
        raise Disconnected(f"{len(edges)} edges cannot connect {node_count} nodes")

    roots = [v for v in range(1, node_count + 1) if v not in parent_of]
    if not roots:
        raise CycleDetected("every node has a parent")
    if len(roots) > 1:
        raise Disconnected(f"multiple roots: {roots}")
    root = roots[0]

    children_of: dict[int, list[int]] = {v: [] for v in range(1, node_count + 1)}
    for c, p in parent_of.items():
        children_of[p].append(c)
    for v in children_of:
        children_of[v].sort()

    # BFS from the declared root; unreached nodes all have parents, so any
    # leftover component necessarily contains a cycle.
    order = [root]
    seen = {root}
    for v in order:
        for c in children_of[v]:
            seen.add(c)
            order.append(c)
    if len(order) != node_count:
        raise CycleDetected("edges form a cycle disconnected from the root")

    already_canonical = root == 1 and all(parent_of[c] < c for c in parent_of)
    if already_canonical:
        relabel = None
        parent = [0] * (node_count + 1)
        for c, p in parent_of.items():
            parent[c] = p
    else:
        relabel = {old: new for new, old in enumerate(order, start=1)}
        parent = [0] * (node_count + 1)
        for c, p in parent_of.items():
            parent[relabel[c]] = relabel[p]

    children: list[tuple[int, ...]] = [()] * (node_count + 1)
    kids: dict[int, list[int]] = {v: [] for v in range(1, node_count + 1)}
    for c in range(2, node_count + 1):
        kids[parent[c]].append(c)
    for v in range(1, node_count + 1):
        children[v] = tuple(sorted(kids[v]))

    return IndexedTree(node_count, tuple(parent), tuple(children), relabel)


def tree_path(tree: IndexedTree, n1: int, n2: int) -> list[tuple[int, int]]:
    """The unique simple path from n1 to n2 as an ordered list of links.

    Each link is reported as an (origin, destination) pair in walk order.
    For n1 == n2 the result is the single dummy self-link [(n1, n1)]; the
    cost model gives that link its own cost slot even though it is not a
    graph edge.
    """
    tree.check_index(n1)
    tree.check_index(n2)
    if n1 == n2:
        return [(n1, n1)]
    up: list[tuple[int, int]] = []
    down: list[tuple[int, int]] = []
    a, b = n1, n2
    while a != b:
        if tree._depth[a] >= tree._depth[b]:
            up.append((a, tree.parent[a]))
            a = tree.parent[a]
        else:
            down.append((tree.parent[b], b))
            b = tree.parent[b]
    down.reverse()
    return up + down


@dataclass(frozen=True)
class AppGraph:
    """Application graph: a tree of components with typed resource demands.

    ``demands`` is a (V, K) array (row v-1 holds node v's K demands),
    ``edge_demands`` maps each tree edge, identified by its child index,
    to a bandwidth demand.  ``pinned`` pre-specifies placements for a subset
    of nodes (physical node indices).
    """

    tree: IndexedTree
    demands: np.ndarray
    edge_demands: np.ndarray
    pinned: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        v = self.tree.node_count
        d = np.asarray(self.demands, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != v or d.shape[1] < 1:
            raise ValueError(f"demands must be (V, K) with V={v}, got {d.shape}")
        if np.any(d < 0):
            raise ValueError("demands must be non-negative")
        ed = np.asarray(self.edge_demands, dtype=np.float64)
        if ed.shape != (max(v - 1, 0),):
            raise ValueError(f"edge_demands must have length V-1={v - 1}")
        if np.any(ed < 0):
            raise ValueError("edge_demands must be non-negative")
        object.__setattr__(self, "demands", d)
        object.__setattr__(self, "edge_demands", ed)
        for node in self.pinned:
            self.tree.check_index(node)

    @property
    def node_count(self) -> int:
        return self.tree.node_count

    @property
    def resource_count(self) -> int:
        return int(self.demands.shape[1])

    @staticmethod
    def from_tree(tree: IndexedTree, k: int = 1,
                  pinned: dict[int, int] | None = None) -> AppGraph:
        """AppGraph with all-zero demands; placement costs then live entirely
        in the CostModel."""
        v = tree.node_count
        return AppGraph(tree, np.zeros((v, k)), np.zeros(max(v - 1, 0)),
                        dict(pinned or {}))

    def validate_pins(self, phys: "PhysGraph") -> None:
        for node, target in self.pinned.items():
            phys.tree.check_index(target)


@dataclass(frozen=True)
class PhysGraph:
    """Physical topology: a tree of compute nodes and links.

    Link count is node_count - 1; a link is identified by its child endpoint.
    ``node_capacity`` ((N, K)) and ``link_capacity`` ((N-1,) by child-2 offset)
    are optional utilization limits checked by the cost model.
    """

    tree: IndexedTree
    node_capacity: np.ndarray | None = None
    link_capacity: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = self.tree.node_count
        if self.node_capacity is not None:
            nc = np.asarray(self.node_capacity, dtype=np.float64)
            if nc.ndim != 2 or nc.shape[0] != n:
                raise ValueError(f"node_capacity must be (N, K) with N={n}")
            object.__setattr__(self, "node_capacity", nc)
        if self.link_capacity is not None:
            lc = np.asarray(self.link_capacity, dtype=np.float64)
            if lc.shape != (max(n - 1, 0),):
                raise ValueError(f"link_capacity must have length N-1={n - 1}")
            object.__setattr__(self, "link_capacity", lc)

    @property
    def node_count(self) -> int:
        return self.tree.node_count

    @property
    def link_count(self) -> int:
        return self.tree.node_count - 1


@dataclass(frozen=True)
class Junction:
    node: int
    pinned: bool


@dataclass(frozen=True)
class JunctionReport:
    junctions: tuple[Junction, ...]
    h: int


def junction_analysis(app: AppGraph) -> JunctionReport:
    """Find junction nodes (>= 2 children) and the depth parameter H.

    H is the largest number of *unpinned* junctions on any single
    root-to-leaf path; it drives the enumeration depth and the exponent in
    the online engine's failure threshold.
    """
    tree = app.tree
    junctions = tuple(
        Junction(v, v in app.pinned)
        for v in range(1, tree.node_count + 1)
        if len(tree.children[v]) >= 2
    )
    unpinned = {j.node for j in junctions if not j.pinned}
    h = 0
    counts = [0] * (tree.node_count + 1)
    counts[1] = 1 if 1 in unpinned else 0
    h = counts[1]
    for v in range(2, tree.node_count + 1):
        counts[v] = counts[tree.parent[v]] + (1 if v in unpinned else 0)
        h = max(h, counts[v])
    return JunctionReport(junctions, h)


def line_tree(node_count: int) -> IndexedTree:
    """Convenience: the path graph 1-2-...-n."""
    return build_tree(node_count, [(i, i + 1) for i in range(1, node_count)])


def is_line(tree: IndexedTree) -> bool:
    """True when every node has at most one child (the tree is a chain)."""
    return all(len(tree.children[v]) <= 1 for v in range(1, tree.node_count + 1))
