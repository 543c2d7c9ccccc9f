"""Exact placement of a linear application graph onto a tree physical graph.

The solver is a dynamic program over (app node, host) cells: the optimal
cost of placing the first v1 line nodes given that v1 sits on host n splits
into the cost of the prefix before the current co-located run, the run's
node load on n, and the connecting edge's path cost.  Order preservation
(each node's host must lie in the previous host's subtree) is what makes the
split exact, and is enforced by giving climbing paths infinite cost.

Two objective families are supported: a MAX form (the load-balancing
objective, optionally with per-element monotone transforms) and a SUM form
(sum of transformed per-element loads, used by the online engine with
exponential-difference transforms).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import _kernel
from .branching import Branch, BranchKind
from .costs import CostModel, Mapping, SystemState
from .graphs import AppGraph, PhysGraph, build_tree

__all__ = [
    "ObjectiveForm",
    "ObjectiveSpec",
    "Infeasible",
    "NotASimpleBranch",
    "DpTables",
    "LineResult",
    "ExtendedLine",
    "extend_open_edges",
    "place_line",
    "recover_mapping",
]

INF = math.inf

NodeTransform = Callable[[int, int, float], float]
LinkTransform = Callable[[tuple[int, int], float], float]


class Infeasible(ValueError):
    """No finite-cost placement exists under the given constraints."""


class NotASimpleBranch(ValueError):
    pass


class ObjectiveForm(Enum):
    MAX = "max"
    SUM = "sum"


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which objective the line solver optimizes.

    ``node_transform(n, k, x)`` maps the total load x of resource k on host n;
    ``link_transform(link, x)`` maps the load on a physical link given as a
    (parent, child) pair.  Transforms must be monotone increasing with
    t(0) = 0 and t(inf) = inf; None means identity.  With identity transforms
    the MAX form is exactly the single-application load-balancing objective,
    including dummy self-link costs.

    Self-links (n, n) appear only in the MAX form (their cost joins the max,
    transformed); in the SUM form a finite self-link cost is not an element
    of the objective and only an infinite one (a co-location conflict) blocks
    the assignment.
    """

    form: ObjectiveForm = ObjectiveForm.MAX
    node_transform: NodeTransform | None = None
    link_transform: LinkTransform | None = None

    @staticmethod
    def max_identity() -> "ObjectiveSpec":
        return ObjectiveSpec(ObjectiveForm.MAX)

    @staticmethod
    def exponential(alpha: float, j_hat: float) -> "ObjectiveSpec":
        """SUM-form transforms alpha**(y / j_hat); combined with an initial
        state in place_line this evaluates the exponential-difference
        objective of the online engine."""
        def node_t(n: int, k: int, x: float) -> float:
            return alpha ** (x / j_hat)

        def link_t(link: tuple[int, int], x: float) -> float:
            return alpha ** (x / j_hat)

        return ObjectiveSpec(ObjectiveForm.SUM, node_t, link_t)


@dataclass(frozen=True)
class ExtendedLine:
    """A simple branch completed into a proper line application.

    ``app`` is the line; position i hosts original app node ``node_ids[i]``
    (0 when position i is an added zero-demand endpoint) and the line edge
    into position j carries original app edge ``edge_ids[j]``.
    """

    app: AppGraph
    node_ids: tuple[int, ...]
    edge_ids: tuple[int, ...]


def extend_open_edges(branch: Branch) -> ExtendedLine:
    """Complete a simple branch into a line by pinning its open edges.

    Each open edge (an edge to an already-placed neighbor) gains a
    zero-demand endpoint node pinned to that neighbor's physical node, so
    the line solver can treat the branch as a self-contained application.
    """
    if branch.kind == BranchKind.GENERAL:
        raise NotASimpleBranch("branch contains unplaced junction nodes")
    if branch.kind == BranchKind.PINNED_SET:
        raise NotASimpleBranch("placed-node sets have nothing to extend")
    app = branch.source
    if app is None:
        raise NotASimpleBranch("branch carries no source application")
    tree = app.tree
    members = list(branch.nodes)
    member_set = set(members)
    for a, b in zip(members, members[1:]):
        if tree.parent[b] != a:
            raise NotASimpleBranch(f"members {a},{b} are not chained")

    top_edge = None
    bottom_edge = None
    for c in branch.edges:
        u = tree.parent[c]
        if c in member_set and u in member_set:
            continue
        if c == members[0] and u in branch.pins:
            top_edge = c
        elif u == members[-1] and c in branch.pins:
            bottom_edge = c
        else:
            raise NotASimpleBranch(f"edge {c} is not an open edge of the chain")

    node_ids = [0]
    anchors: dict[int, int] = {}
    if top_edge is not None:
        node_ids.append(0)
        anchors[len(node_ids) - 1] = tree.parent[top_edge]
    node_ids.extend(members)
    if bottom_edge is not None:
        node_ids.append(0)
        anchors[len(node_ids) - 1] = bottom_edge

    vn = len(node_ids) - 1
    edge_ids = [0, 0]
    for pos in range(2, vn + 1):
        if pos == 2 and top_edge is not None:
            edge_ids.append(top_edge)
        elif pos == vn and bottom_edge is not None:
            edge_ids.append(bottom_edge)
        else:
            edge_ids.append(node_ids[pos])

    k = app.resource_count
    demands = np.zeros((vn, k))
    for pos in range(1, vn + 1):
        if node_ids[pos]:
            demands[pos - 1] = app.demands[node_ids[pos] - 1]
    edge_demands = np.zeros(max(vn - 1, 0))
    for pos in range(2, vn + 1):
        edge_demands[pos - 2] = app.edge_demands[edge_ids[pos] - 2]

    pinned: dict[int, int] = {}
    for pos, anchor in anchors.items():
        target = branch.pins.get(anchor)
        if target is not None:
            pinned[pos] = target
    for pos in range(1, vn + 1):
        v = node_ids[pos]
        if v and v in app.pinned:
            pinned[pos] = app.pinned[v]

    line = AppGraph(build_tree(vn, [(i, i + 1) for i in range(1, vn)]),
                    demands, edge_demands, pinned)
    return ExtendedLine(line, tuple(node_ids), tuple(edge_ids))


@dataclass
class DpTables:
    """Conditional optimal costs J[v, n] plus the backpointers that recover
    the arg-min mapping (run start and predecessor host per cell)."""

    J: np.ndarray
    bp_vs: np.ndarray
    bp_m: np.ndarray

    def dump_csv(self, path: str) -> None:
        vn = self.J.shape[0] - 1
        n = self.J.shape[1] - 1
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["v"] + [f"n{j}" for j in range(1, n + 1)])
            for v in range(1, vn + 1):
                writer.writerow([v] + [repr(float(x)) for x in self.J[v, 1:]])


@dataclass(frozen=True)
class LineResult:
    mapping: Mapping
    cost: float
    tables: DpTables | None = None


def _check_line(app: AppGraph) -> None:
    tree = app.tree
    for v in range(2, tree.node_count + 1):
        if tree.parent[v] != v - 1:
            raise ValueError("application graph is not a line indexed in chain order")


def _wrap_sum_transforms(spec: ObjectiveSpec, state: SystemState,
                         phys: PhysGraph) -> tuple[NodeTransform, LinkTransform]:
    """Turn state-free transforms into increments on top of an initial state:
    t(base + x) - t(base)."""
    node_t = spec.node_transform or (lambda n, k, x: x)
    link_t = spec.link_transform or (lambda link, x: x)
    p, q = state.adjusted()

    def wrapped_node(n: int, k: int, x: float) -> float:
        base = p[n, k]
        return node_t(n, k, base + x) - node_t(n, k, base)

    def wrapped_link(link: tuple[int, int], x: float) -> float:
        base = q[link[1]]
        return link_t(link, base + x) - link_t(link, base)

    return wrapped_node, wrapped_link


def place_line(app_line: AppGraph, phys: PhysGraph, model: CostModel,
               spec: ObjectiveSpec | None = None,
               initial_state: SystemState | None = None,
               debug_tables: bool = False) -> LineResult:
    """Optimal placement of a line application, subject to order preservation.

    ``spec`` defaults to the MAX-identity objective.  For the SUM form an
    ``initial_state`` turns each transform t into the increment
    t(base + x) - t(base) around the state's epoch-adjusted loads, which is
    how the online engine scores placements; the MAX form ignores it (the
    single-application setting).

    Returns the mapping, its cost, and optionally the DP tables.  Raises
    Infeasible when every order-preserving mapping has infinite cost.
    """
    spec = spec or ObjectiveSpec.max_identity()
    _check_line(app_line)
    vn = app_line.node_count
    n = phys.node_count
    k = model.resource_count
    if model.app_nodes != vn or model.phys_nodes != n:
        raise ValueError("cost model shape does not match the graphs")

    fast = (spec.form == ObjectiveForm.MAX
            and spec.node_transform is None and spec.link_transform is None)
    if fast:
        J, bp_vs, bp_m, col, val = _kernel_max_identity(app_line, phys, model)
    else:
        J, bp_vs, bp_m, col, val = _general_dp(app_line, phys, model, spec, initial_state)

    if math.isinf(val):
        raise Infeasible("no finite-cost order-preserving mapping exists")
    tables = DpTables(J, bp_vs, bp_m)
    mapping = recover_mapping(tables, col)
    return LineResult(mapping, float(val), tables if debug_tables else None)


def _kernel_max_identity(app: AppGraph, phys: PhysGraph, model: CostModel):
    vn, n, k = app.node_count, phys.node_count, model.resource_count
    parent = phys.tree.parent_array()
    d = np.ascontiguousarray(model.node_cost)
    node_a = np.zeros((1, n + 1, k))
    econn = np.ascontiguousarray(model.edge_cost).reshape(1, vn + 1, n + 1)
    eself = np.ascontiguousarray(model.self_cost)
    pin = np.zeros((1, vn + 1), dtype=np.int32)
    for v, target in app.pinned.items():
        pin[0, v] = target
    allowed = np.ones((vn + 1, n + 1), dtype=np.bool_)
    J = np.empty((1, vn + 1, n + 1))
    bp_vs = np.zeros((1, vn + 1, n + 1), dtype=np.int32)
    bp_m = np.zeros((1, vn + 1, n + 1), dtype=np.int32)
    _kernel.line_dp(0, parent, d, node_a, 0.0, econn, eself, pin, allowed,
                    J, bp_vs, bp_m)
    col = np.zeros(1, dtype=np.int32)
    val = np.zeros(1)
    _kernel.final_column(J, pin, col, val)
    return J[0], bp_vs[0], bp_m[0], int(col[0]), float(val[0])


def _general_dp(app: AppGraph, phys: PhysGraph, model: CostModel,
                spec: ObjectiveSpec, initial_state: SystemState | None):
    """Reference implementation with arbitrary transform callables.

    Mirrors the compiled kernel cell by cell, including tie handling, so the
    two routes are interchangeable wherever both apply.
    """
    vn, n_count, k_count = app.node_count, phys.node_count, model.resource_count
    tree = phys.tree
    is_sum = spec.form == ObjectiveForm.SUM

    if is_sum and initial_state is not None:
        node_t, link_t = _wrap_sum_transforms(spec, initial_state, phys)
    else:
        node_t = spec.node_transform or (lambda n, k, x: x)
        link_t = spec.link_transform or (lambda link, x: x)

    def combine(a: float, b: float) -> float:
        return a + b if is_sum else max(a, b)

    # Connecting-edge cost of line edge v on the link into node c.
    def link_term(v: int, c: int) -> float:
        raw = model.edge_cost[v, c]
        if math.isinf(raw):
            return INF
        return link_t((tree.parent[c], c), raw)

    def self_term(v: int, n: int) -> float:
        raw = model.self_cost[v, n]
        if math.isinf(raw):
            return INF
        return 0.0 if is_sum else link_t((n, n), raw)

    J = np.full((vn + 1, n_count + 1), INF)
    bp_vs = np.zeros((vn + 1, n_count + 1), dtype=np.int32)
    bp_m = np.zeros((vn + 1, n_count + 1), dtype=np.int32)

    for v1 in range(1, vn + 1):
        runsum = np.zeros((n_count + 1, k_count))
        runextra = np.zeros(n_count + 1)
        best = np.full(n_count + 1, INF)
        bvs = np.zeros(n_count + 1, dtype=np.int32)
        bm = np.zeros(n_count + 1, dtype=np.int32)
        for vs in range(v1, 0, -1):
            runsum[1:] += model.node_cost[vs, 1:]
            pv = app.pinned.get(vs, 0)
            if pv:
                for n in range(1, n_count + 1):
                    if n != pv:
                        runextra[n] = INF
            if vs < v1:
                for n in range(1, n_count + 1):
                    runextra[n] = combine(runextra[n], self_term(vs + 1, n))
            if vs > 1:
                D = np.full(n_count + 1, INF)
                Dm = np.zeros(n_count + 1, dtype=np.int32)
                for n in range(2, n_count + 1):
                    p = tree.parent[n]
                    e = link_term(vs, n)
                    va = combine(J[vs - 1, p], e)
                    vb = combine(D[p], e)
                    if vb <= va:
                        D[n], Dm[n] = vb, Dm[p]
                    else:
                        D[n], Dm[n] = va, p
            for n in range(1, n_count + 1):
                node_term = 0.0
                for k in range(k_count):
                    x = runsum[n, k]
                    if x > 0.0:
                        node_term = combine(node_term, node_t(n, k, x))
                cand = combine(node_term, runextra[n])
                if vs > 1:
                    cand = combine(cand, D[n])
                if cand <= best[n]:
                    best[n] = cand
                    bvs[n] = vs
                    bm[n] = Dm[n] if vs > 1 else 0
        J[v1, 1:] = best[1:]
        bp_vs[v1, 1:] = bvs[1:]
        bp_m[v1, 1:] = bm[1:]

    last_pin = app.pinned.get(vn, 0)
    if last_pin:
        col, val = last_pin, J[vn, last_pin]
    else:
        col = int(np.argmin(J[vn, 1:])) + 1
        val = J[vn, col]
    return J, bp_vs, bp_m, col, float(val)


def recover_mapping(tables: DpTables, final_column: int) -> Mapping:
    """Walk the backpointers from the chosen last column to the full mapping."""
    vn = tables.J.shape[0] - 1
    assign = [0] * (vn + 1)
    v1, n = vn, final_column
    while v1 >= 1:
        vs = int(tables.bp_vs[v1, n])
        m = int(tables.bp_m[v1, n])
        for v in range(vs, v1 + 1):
            assign[v] = n
        v1, n = vs - 1, m
    return Mapping(tuple(assign))
