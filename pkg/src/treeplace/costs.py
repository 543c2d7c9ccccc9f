"""Placement costs, aggregated per-element state, and the load-balancing objective.

Costs are extended reals: +inf encodes forbidden assignments (domain and
conflict constraints), so infeasibility propagates through max/sum instead of
needing a side channel.  All arrays are float64 with sentinel row/column 0 so
that public 1-based node indices can be used directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graphs import AppGraph, IndexedTree, PhysGraph, tree_path

__all__ = [
    "InfiniteCost",
    "CostModel",
    "Mapping",
    "SystemState",
    "CapacityViolation",
    "CapacityReport",
    "pairwise_cost",
    "accumulate",
    "objective",
    "check_capacity",
    "placement_increments",
]

INF = float("inf")


class InfiniteCost(ValueError):
    """An illegal (infinite-cost) mapping was committed to the state."""


def link_child(tree: IndexedTree, a: int, b: int) -> int:
    """Canonical id of the link {a, b}: its child endpoint."""
    if tree.parent[b] == a:
        return b
    if tree.parent[a] == b:
        return a
    raise ValueError(f"({a},{b}) is not a tree link")


@dataclass(frozen=True)
class CostModel:
    """Dense placement costs for one application graph.

    node_cost[v, n, k]   cost of putting app node v on physical node n for
                         resource type k; shape (V+1, N+1, K), index 0 unused.
    edge_cost[e, l]      cost of app edge e (identified by its child node)
                         on physical link l (identified by its child node);
                         shape (V+1, N+1), rows <2 and cols <2 unused.
    self_cost[e, n]      cost of app edge e on the dummy self-link (n, n),
                         charged when both endpoints share node n; shape
                         (V+1, N+1).  Defaults to 0: co-location normally
                         consumes no link bandwidth.
    """

    node_cost: np.ndarray
    edge_cost: np.ndarray
    self_cost: np.ndarray

    def __post_init__(self) -> None:
        nc = np.asarray(self.node_cost, dtype=np.float64)
        ec = np.asarray(self.edge_cost, dtype=np.float64)
        sc = np.asarray(self.self_cost, dtype=np.float64)
        if nc.ndim != 3:
            raise ValueError("node_cost must be (V+1, N+1, K)")
        if ec.shape != (nc.shape[0], nc.shape[1]) or sc.shape != ec.shape:
            raise ValueError("edge_cost and self_cost must be (V+1, N+1)")
        for arr in (nc, ec, sc):
            if np.isnan(arr).any():
                raise ValueError("cost entries must not be NaN")
            if (arr[~np.isinf(arr)] < 0).any():
                raise ValueError("cost entries must be non-negative or +inf")
        object.__setattr__(self, "node_cost", nc)
        object.__setattr__(self, "edge_cost", ec)
        object.__setattr__(self, "self_cost", sc)

    @property
    def app_nodes(self) -> int:
        return self.node_cost.shape[0] - 1

    @property
    def phys_nodes(self) -> int:
        return self.node_cost.shape[1] - 1

    @property
    def resource_count(self) -> int:
        return self.node_cost.shape[2]

    @staticmethod
    def zeros(v: int, n: int, k: int = 1) -> "CostModel":
        return CostModel(np.zeros((v + 1, n + 1, k)),
                         np.zeros((v + 1, n + 1)),
                         np.zeros((v + 1, n + 1)))

    def min_positive_entry(self) -> float:
        """Smallest strictly positive finite cost; the default reference-cost
        seed for the online engine."""
        best = INF
        for arr in (self.node_cost, self.edge_cost, self.self_cost):
            finite = arr[np.isfinite(arr) & (arr > 0)]
            if finite.size:
                best = min(best, float(finite.min()))
        return best


@dataclass(frozen=True)
class Mapping:
    """Total assignment of application nodes to physical nodes.

    ``assign[v]`` is the physical node of app node v; slot 0 is a sentinel.
    """

    assign: tuple[int, ...]

    def __getitem__(self, v: int) -> int:
        return self.assign[v]

    def __len__(self) -> int:
        return len(self.assign) - 1

    @staticmethod
    def from_dict(d: dict[int, int], node_count: int) -> "Mapping":
        assign = [0] * (node_count + 1)
        for v, n in d.items():
            assign[v] = n
        if any(a == 0 for a in assign[1:]):
            raise ValueError("mapping must be total")
        return Mapping(tuple(assign))

    def as_dict(self) -> dict[int, int]:
        return {v: n for v, n in enumerate(self.assign) if v >= 1}

    def check(self, app: AppGraph, phys: PhysGraph) -> None:
        if len(self) != app.node_count:
            raise ValueError("mapping length does not match app size")
        for n in self.assign[1:]:
            phys.tree.check_index(n)
        for v, target in app.pinned.items():
            if self.assign[v] != target:
                raise ValueError(f"node {v} pinned to {target}, mapped to {self.assign[v]}")


def pairwise_cost(model: CostModel, v: int, n1: int, n2: int, phys: PhysGraph) -> float:
    """Cost of app edge (v-1, v) when v-1 sits on n1 and v on n2.

    Returns +inf when the physical path from n1 to n2 traverses any node with
    index smaller than n1 (the order-preservation rule is violated: the walk
    climbed above its starting point).  Otherwise the maximum single-link cost
    along the path, or the dummy self-link cost when n1 == n2.
    """
    if v < 2:
        raise ValueError("pairwise cost is defined for v >= 2")
    tree = phys.tree
    tree.check_index(n1)
    tree.check_index(n2)
    if n1 == n2:
        return float(model.self_cost[v, n1])
    # Equivalent to the literal rule: every node on the n1->n2 path other
    # than n1 has a larger index iff n2 lies in n1's subtree.
    if not tree.is_ancestor_or_self(n1, n2):
        return INF
    worst = 0.0
    for a, b in tree_path(tree, n1, n2):
        worst = max(worst, float(model.edge_cost[v, link_child(tree, a, b)]))
    return worst


@dataclass
class SystemState:
    """Aggregated weighted costs on every physical element.

    ``p[n, k]`` accumulates node costs, ``q[c]`` accumulates the cost on the
    link whose child endpoint is c (slots 0 and 1 unused).  ``baseline_p`` /
    ``baseline_q`` snapshot the state at the start of the current doubling
    epoch; the online engine measures loads relative to them.
    """

    p: np.ndarray
    q: np.ndarray
    baseline_p: np.ndarray = field(default=None)  # type: ignore[assignment]
    baseline_q: np.ndarray = field(default=None)  # type: ignore[assignment]
    app_counter: int = 0

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=np.float64)
        self.q = np.asarray(self.q, dtype=np.float64)
        if self.baseline_p is None:
            self.baseline_p = np.zeros_like(self.p)
        if self.baseline_q is None:
            self.baseline_q = np.zeros_like(self.q)

    @staticmethod
    def empty(n: int, k: int = 1) -> "SystemState":
        return SystemState(np.zeros((n + 1, k)), np.zeros(n + 1))

    @property
    def phys_nodes(self) -> int:
        return self.p.shape[0] - 1

    @property
    def resource_count(self) -> int:
        return self.p.shape[1]

    def copy(self) -> "SystemState":
        return SystemState(self.p.copy(), self.q.copy(),
                           self.baseline_p.copy(), self.baseline_q.copy(),
                           self.app_counter)

    def adjusted(self) -> tuple[np.ndarray, np.ndarray]:
        """Epoch-relative loads max{0, current - baseline}."""
        return (np.maximum(0.0, self.p - self.baseline_p),
                np.maximum(0.0, self.q - self.baseline_q))

    def snapshot_baseline(self) -> None:
        """Start a new epoch: remember the current loads as the baseline."""
        self.baseline_p = self.p.copy()
        self.baseline_q = self.q.copy()


def placement_increments(mapping: Mapping, app: AppGraph, model: CostModel,
                         phys: PhysGraph) -> tuple[np.ndarray, np.ndarray]:
    """Per-element cost increments (dp, dq) of placing one app under mapping.

    Node v adds node_cost[v, pi(v), :] to its host; app edge e adds
    edge_cost[e, l] to every link l on the physical path between its
    endpoints' hosts.  Co-located edges touch no link, but an infinite
    self-link cost still marks the mapping illegal.

    Raises InfiniteCost when any contributing entry is +inf.
    """
    tree = phys.tree
    n, k = phys.node_count, model.resource_count
    dp = np.zeros((n + 1, k))
    dq = np.zeros(n + 1)
    for v in range(1, app.node_count + 1):
        row = model.node_cost[v, mapping[v], :]
        if np.isinf(row).any():
            raise InfiniteCost(f"node {v} -> {mapping[v]} has infinite cost")
        dp[mapping[v], :] += row
    for c in range(2, app.node_count + 1):
        u = app.tree.parent[c]
        a, b = mapping[u], mapping[c]
        if a == b:
            if np.isinf(model.self_cost[c, a]):
                raise InfiniteCost(f"edge {c}: co-location on {a} forbidden")
            continue
        for x, y in tree_path(tree, a, b):
            l = link_child(tree, x, y)
            cost = model.edge_cost[c, l]
            if np.isinf(cost):
                raise InfiniteCost(f"edge {c} -> link {l} has infinite cost")
            dq[l] += cost
    return dp, dq


def accumulate(state: SystemState, mapping: Mapping, app: AppGraph,
               model: CostModel, phys: PhysGraph) -> SystemState:
    """Return a new state with one application's costs added.

    Pure: the input state is unchanged.  Sums commute, so accumulating a
    multiset of applications in any order yields the same totals.
    """
    dp, dq = placement_increments(mapping, app, model, phys)
    out = state.copy()
    out.p += dp
    out.q += dq
    out.app_counter += 1
    return out


def objective(state: SystemState) -> float:
    """The load-balancing objective: the largest aggregated cost over all
    node-resource pairs and links."""
    worst = 0.0
    if state.p[1:].size:
        worst = max(worst, float(state.p[1:].max()))
    if state.q[2:].size:
        worst = max(worst, float(state.q[2:].max()))
    return worst


@dataclass(frozen=True)
class CapacityViolation:
    kind: str          # "node" or "link"
    element: int       # physical node index, or link child index
    resource: int | None
    load: float
    capacity: float


@dataclass(frozen=True)
class CapacityReport:
    ok: bool
    violations: tuple[CapacityViolation, ...] = ()


def check_capacity(state: SystemState, mapping: Mapping, app: AppGraph,
                   model: CostModel, phys: PhysGraph) -> CapacityReport:
    """Would committing this mapping stay within the declared capacities?

    Vacuously ok when the physical graph declares no limits.
    """
    if phys.node_capacity is None and phys.link_capacity is None:
        return CapacityReport(True)
    dp, dq = placement_increments(mapping, app, model, phys)
    violations: list[CapacityViolation] = []
    if phys.node_capacity is not None:
        total = state.p + dp
        for n in range(1, phys.node_count + 1):
            for k in range(model.resource_count):
                cap = phys.node_capacity[n - 1, k]
                if total[n, k] > cap:
                    violations.append(CapacityViolation("node", n, k, float(total[n, k]), float(cap)))
    if phys.link_capacity is not None:
        total_q = state.q + dq
        for c in range(2, phys.node_count + 1):
            cap = phys.link_capacity[c - 2]
            if total_q[c] > cap:
                violations.append(CapacityViolation("link", c, None, float(total_q[c]), float(cap)))
    return CapacityReport(not violations, tuple(violations))
