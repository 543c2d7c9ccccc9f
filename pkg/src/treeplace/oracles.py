"""Exhaustive ground-truth optimizers and baseline heuristics.

These engines re-derive optimal placements by enumeration, independently of
the dynamic program, so the fast paths can be checked against them exactly.
Enumeration is budgeted: the underlying decision problems are NP-hard, so
every oracle deterministically aborts once it has visited its cap of
candidate assignments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .branching import BranchKind, split
from .costs import CostModel, Mapping, SystemState, objective, accumulate
from .graphs import AppGraph, PhysGraph, junction_analysis, tree_path
from .line_dp import Infeasible, ObjectiveForm, ObjectiveSpec

__all__ = [
    "OracleBudget",
    "BudgetExceeded",
    "ItemOversized",
    "OfflineJointResult",
    "brute_force_cycle_free",
    "brute_force_with_cycles",
    "brute_force_offline_joint",
    "greedy_place",
    "first_fit_ordered",
    "fairness_allowed",
    "evaluate_cycle_free",
]

INF = math.inf


class BudgetExceeded(RuntimeError):
    pass


class ItemOversized(ValueError):
    pass


@dataclass(frozen=True)
class OracleBudget:
    """Cap on enumerated complete assignments; exceeding it is an error, not
    a silent truncation."""

    max_states: int = 2_000_000


class _Counter:
    def __init__(self, budget: OracleBudget | None):
        self.left = (budget or OracleBudget()).max_states

    def tick(self) -> None:
        self.left -= 1
        if self.left < 0:
            raise BudgetExceeded("oracle enumeration budget exhausted")


def _loads(app: AppGraph, phys: PhysGraph, model: CostModel,
           assign: Sequence[int]) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int]], bool]:
    """Aggregate per-element loads of one complete assignment.

    Returns (node loads, link loads, co-located edges as (edge, host), and
    whether an infinite entry was hit).  Link loads sum the bandwidth of
    every app edge whose physical path uses the link; with order-preserving
    mappings of a line each link carries at most one edge, but in general
    (and always when cycles are allowed) they stack.
    """
    n, k = phys.node_count, model.resource_count
    p = np.zeros((n + 1, k))
    q = np.zeros(n + 1)
    selfs: list[tuple[int, int]] = []
    blocked = False
    for v in range(1, app.node_count + 1):
        row = model.node_cost[v, assign[v]]
        if np.isinf(row).any():
            blocked = True
        p[assign[v]] += row
    for c in range(2, app.node_count + 1):
        u = app.tree.parent[c]
        a, b = assign[u], assign[c]
        if a == b:
            if math.isinf(model.self_cost[c, a]):
                blocked = True
            selfs.append((c, a))
            continue
        for x, y in tree_path(phys.tree, a, b):
            l = y if phys.tree.parent[y] == x else x
            cost = model.edge_cost[c, l]
            if math.isinf(cost):
                blocked = True
            q[l] += cost
    return p, q, selfs, blocked


def evaluate_cycle_free(app: AppGraph, phys: PhysGraph, model: CostModel,
                        assign: Sequence[int], spec: ObjectiveSpec | None = None,
                        initial_state: SystemState | None = None) -> float:
    """Objective value of one assignment under the line solver's semantics.

    MAX form: the largest transformed per-element load, with each co-located
    edge's dummy self-link cost joining the max individually.  SUM form: the
    sum of transformed element loads; finite self-link costs are not elements
    (only an infinite one blocks).  An initial_state turns SUM transforms
    into increments around its adjusted loads, mirroring place_line.
    """
    spec = spec or ObjectiveSpec.max_identity()
    p, q, selfs, blocked = _loads(app, phys, model, assign)
    if blocked:
        return INF
    node_t = spec.node_transform or (lambda n, k, x: x)
    link_t = spec.link_transform or (lambda link, x: x)
    is_sum = spec.form == ObjectiveForm.SUM
    if is_sum and initial_state is not None:
        base_p, base_q = initial_state.adjusted()

        plain_node, plain_link = node_t, link_t

        def node_t(n, k, x, _f=plain_node, _b=base_p):
            return _f(n, k, _b[n, k] + x) - _f(n, k, _b[n, k])

        def link_t(link, x, _g=plain_link, _b=base_q):
            return _g(link, _b[link[1]] + x) - _g(link, _b[link[1]])

    total = 0.0
    for n in range(1, phys.node_count + 1):
        for k in range(model.resource_count):
            x = p[n, k]
            if x > 0:
                term = INF if math.isinf(x) else node_t(n, k, float(x))
                total = total + term if is_sum else max(total, term)
        if n >= 2 and q[n] > 0:
            term = INF if math.isinf(q[n]) else link_t((phys.tree.parent[n], n), float(q[n]))
            total = total + term if is_sum else max(total, term)
    if not is_sum:
        for c, host in selfs:
            raw = model.self_cost[c, host]
            if raw > 0:
                total = max(total, link_t((host, host), float(raw)))
    return float(total)


def _evaluate_state_max(app: AppGraph, phys: PhysGraph, model: CostModel,
                        assign: Sequence[int]) -> float:
    """Plain aggregated min-max objective (no self-link terms); infinite
    entries anywhere make the assignment illegal."""
    p, q, _selfs, blocked = _loads(app, phys, model, assign)
    if blocked:
        return INF
    worst = float(p[1:].max()) if p[1:].size else 0.0
    if q[2:].size:
        worst = max(worst, float(q[2:].max()))
    return worst


def _cycle_free_candidates(app: AppGraph, phys: PhysGraph, v: int,
                           host_of_parent: int | None) -> list[int]:
    pin = app.pinned.get(v)
    if host_of_parent is None:
        base = range(1, phys.node_count + 1)
    else:
        base = phys.tree.subtree(host_of_parent)
    if pin is None:
        return list(base)
    return [pin] if pin in set(base) else []


def _enumerate_cycle_free(app: AppGraph, phys: PhysGraph, counter: _Counter):
    """Yield every order-preserving assignment (each node inside its parent's
    host subtree), in lexicographic order."""
    vcount = app.node_count
    assign = [0] * (vcount + 1)

    def rec(v: int):
        if v > vcount:
            counter.tick()
            yield tuple(assign)
            return
        parent = app.tree.parent[v]
        host = assign[parent] if parent else None
        for n in _cycle_free_candidates(app, phys, v, host):
            assign[v] = n
            yield from rec(v + 1)
        assign[v] = 0

    yield from rec(1)


def brute_force_cycle_free(app: AppGraph, phys: PhysGraph, model: CostModel,
                           spec: ObjectiveSpec | None = None,
                           initial_state: SystemState | None = None,
                           budget: OracleBudget | None = None) -> tuple[Mapping, float]:
    """Exhaustive optimum over order-preserving mappings.

    Ties go to the lexicographically smallest assignment.  The returned cost
    is +inf (with some witness mapping) when every candidate is blocked.
    """
    counter = _Counter(budget)
    best_cost = INF
    best = None
    for assign in _enumerate_cycle_free(app, phys, counter):
        cost = evaluate_cycle_free(app, phys, model, assign, spec, initial_state)
        if best is None or cost < best_cost:
            best_cost, best = cost, assign
    if best is None:
        raise Infeasible("no order-preserving assignment exists (pins conflict)")
    return Mapping(best), best_cost


def brute_force_with_cycles(app: AppGraph, phys: PhysGraph, model: CostModel,
                            budget: OracleBudget | None = None) -> tuple[Mapping, float]:
    """Exhaustive optimum over ALL total mappings (ordering dropped).

    Link loads sum every app edge routed over the link, so this is the
    unordered baseline the order-preservation restriction is judged against.
    """
    counter = _Counter(budget)
    vcount, n = app.node_count, phys.node_count
    best_cost = INF
    best = None
    choices = []
    for v in range(1, vcount + 1):
        pin = app.pinned.get(v)
        choices.append([pin] if pin else list(range(1, n + 1)))
    for combo in product(*choices):
        counter.tick()
        assign = (0,) + combo
        cost = _evaluate_state_max(app, phys, model, assign)
        if best is None or cost < best_cost:
            best_cost, best = cost, assign
    return Mapping(best), best_cost


@dataclass(frozen=True)
class OfflineJointResult:
    cost: float
    mappings: tuple[Mapping, ...]


def brute_force_offline_joint(apps: Sequence, phys: PhysGraph,
                              model: CostModel | None = None,
                              budget: OracleBudget | None = None) -> OfflineJointResult:
    """Exact joint optimum over order-preserving mappings of all applications.

    The objective is the final aggregated min-max cost.  Infeasible
    applications make the whole instance infinite.  Running maxima prune the
    search; ties keep the lexicographically smallest mapping tuple.
    """
    requests: list[tuple[AppGraph, CostModel]] = []
    for item in apps:
        if isinstance(item, tuple):
            requests.append(item)
        else:
            if model is None:
                raise ValueError("bare AppGraph items need a shared model")
            requests.append((item, model))
    if not requests:
        return OfflineJointResult(0.0, ())

    counter = _Counter(budget)
    n = phys.node_count
    k = requests[0][1].resource_count
    best_cost = INF
    best: tuple | None = None

    per_app = []
    for app, m in requests:
        options = []
        for assign in _enumerate_cycle_free(app, phys, counter):
            p, q, _selfs, blocked = _loads(app, phys, m, assign)
            if not blocked:
                options.append((assign, p, q))
        per_app.append(options)

    chosen: list[tuple] = []

    def rec(i: int, p: np.ndarray, q: np.ndarray, running: float):
        nonlocal best_cost, best
        if running >= best_cost and best is not None:
            return
        if i == len(per_app):
            if running < best_cost:
                best_cost = running
                best = tuple(chosen)
            return
        for assign, dp, dq in per_app[i]:
            counter.tick()
            p2 = p + dp
            q2 = q + dq
            worst = running
            if p2[1:].size:
                worst = max(worst, float(p2[1:].max()))
            if q2[2:].size:
                worst = max(worst, float(q2[2:].max()))
            if worst >= best_cost and best is not None:
                continue
            chosen.append(assign)
            rec(i + 1, p2, q2, worst)
            chosen.pop()

    if all(per_app):
        rec(0, np.zeros((n + 1, k)), np.zeros(n + 1), 0.0)
    if best is None:
        return OfflineJointResult(INF, ())
    return OfflineJointResult(best_cost, tuple(Mapping(a) for a in best))


def fairness_allowed(app: AppGraph, phys: PhysGraph) -> dict[int, set[int]]:
    """Per-node host restrictions for the baseline heuristics.

    When a junction node's placement is given, its children may only go onto
    that physical node or the node's physical children.
    """
    out: dict[int, set[int]] = {}
    tree = app.tree
    for j, target in app.pinned.items():
        if len(tree.children[j]) >= 2:
            allowed = {target} | set(phys.tree.children[target])
            for c in tree.children[j]:
                if c not in app.pinned:
                    out[c] = allowed
    return out


def greedy_place(state: SystemState, app: AppGraph, phys: PhysGraph,
                 model: CostModel, mode: str = "exact",
                 budget: OracleBudget | None = None) -> Mapping:
    """One-step greedy: the mapping minimizing the post-placement objective.

    ``exact`` enumerates every total mapping (no ordering restriction);
    pre-specified placements and the junction fairness rule are honored, and
    ties pick the lexicographically smallest mapping.  ``dp`` uses the
    branch-by-branch dynamic program on the incremental min-max objective,
    the tractable variant used at simulation scale (order-preserving by
    construction).
    """
    if mode == "dp":
        from .sim import greedy_place_dp
        return greedy_place_dp(state, app, phys, model)
    if mode != "exact":
        raise ValueError(f"unknown greedy mode {mode!r}")
    counter = _Counter(budget)
    allowed = fairness_allowed(app, phys)
    choices = []
    for v in range(1, app.node_count + 1):
        pin = app.pinned.get(v)
        if pin is not None:
            choices.append([pin])
        elif v in allowed:
            choices.append(sorted(allowed[v]))
        else:
            choices.append(list(range(1, phys.node_count + 1)))
    best_cost = INF
    best = None
    for combo in product(*choices):
        counter.tick()
        assign = (0,) + combo
        p, q, _selfs, blocked = _loads(app, phys, model, assign)
        if blocked:
            continue
        total_p = state.p + p
        total_q = state.q + q
        cost = float(total_p[1:].max()) if total_p[1:].size else 0.0
        if total_q[2:].size:
            cost = max(cost, float(total_q[2:].max()))
        if cost < best_cost:
            best_cost, best = cost, assign
    if best is None:
        raise Infeasible("every mapping is blocked by infinite costs")
    return Mapping(best)


def first_fit_ordered(item_costs: Sequence[float], bin_size: float) -> int:
    """Bins used by first-fit packing that preserves the item order.

    Items go into the current bin while they fit; otherwise a fresh bin
    opens.  With any ordering this uses at most twice the unordered optimum's
    bin count, which is the combinatorial heart of the order-preservation
    approximation guarantee.
    """
    bins = 0
    level = 0.0
    for cost in item_costs:
        if cost > bin_size:
            raise ItemOversized(f"item {cost} exceeds bin size {bin_size}")
        if bins == 0 or level + cost > bin_size:
            bins += 1
            level = cost
        else:
            level += cost
    return bins
