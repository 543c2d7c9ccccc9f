"""Synthetic workload generator and experiment runner.

Reproduces the evaluation design: sequentially-attached random trees for
both applications and the physical topology, i.i.d. uniform placement costs
with a cheaper application root that is pinned to the physical root, and a
paired comparison of the proposed online algorithm against a greedy baseline
over many seeds.  Costs act as normalized utilizations: every element has
capacity 1, applications that would overload an element are rejected, and a
seed whose final maximum utilization reaches 1 counts as overloaded and is
excluded from the mean.

Reproducibility: every (sweep point, seed index) pair owns a SeedSequence
child ``SeedSequence(master, spawn_key=(sweep_idx, seed_idx))``, split into
three independent streams (trees, costs, pins), so seeds can run in any
order or in parallel and still produce byte-identical output.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .costs import CostModel, Mapping, SystemState, placement_increments
from .graphs import AppGraph, IndexedTree, PhysGraph, build_tree
from .line_dp import Infeasible
from .online import OnlineConfig, PlacementRequest, run_online, _Lanes, _MaxPolicy, _PlacementCore
from .branching import BranchKind, split
from .oracles import fairness_allowed

__all__ = [
    "SimConfig",
    "SeedOutcome",
    "SweepRow",
    "gen_tree",
    "gen_costs",
    "gen_app",
    "greedy_place_dp",
    "run_greedy",
    "run_experiment",
    "rows_to_csv",
]


@dataclass(frozen=True)
class SimConfig:
    """Experiment configuration; defaults follow the reference evaluation."""

    seed: int = 0
    num_apps: int = 100
    num_seeds: int = 100
    app_size: tuple[int, int] = (3, 10)
    phys_size: tuple[int, int] = (2, 50)
    max_cost: float = 0.015
    root_cost_divisor: float = 10.0
    gamma: float = 2.0
    attach_p: float = 0.7
    resources: int = 1
    variant: str = "pinned"            # "pinned" | "unpinned" junction placement
    sweep: str = "phys-size"           # "phys-size" | "max-cost"
    sweep_values: tuple = (2, 10, 20, 30, 40, 50)
    algorithms: tuple[str, ...] = ("proposed", "greedy")
    # Costs are normalized utilizations; rather than capping every element at
    # capacity 1, runs are scored as-is and seeds whose final maximum reaches
    # 1 count as overloaded (excluded from the mean).  Setting a capacity
    # turns on per-application admission control instead.
    capacity: float | None = None

    def __post_init__(self) -> None:
        if self.variant not in ("pinned", "unpinned"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.sweep not in ("phys-size", "max-cost"):
            raise ValueError(f"unknown sweep {self.sweep!r}")
        if not self.sweep_values:
            raise ValueError("sweep_values must be non-empty")
        if not (0.0 <= self.attach_p <= 1.0):
            raise ValueError("attach_p must be a probability")
        for name in self.algorithms:
            if name not in ("proposed", "greedy"):
                raise ValueError(f"unknown algorithm {name!r}")


def gen_tree(rng: np.random.Generator, node_count: int,
             attach_p: float = 0.7) -> IndexedTree:
    """Sequential-attachment random tree.

    Node m >= 3 attaches to node m-1 with probability ``attach_p`` and
    otherwise to a uniformly random node among 1..m-2 (node 2 always attaches
    to the root), so indices satisfy parent < child by construction.
    """
    edges = []
    if node_count >= 2:
        edges.append((1, 2))
    for m in range(3, node_count + 1):
        if rng.random() < attach_p:
            parent = m - 1
        else:
            parent = int(rng.integers(1, m - 1))
        edges.append((parent, m))
    return build_tree(node_count, edges)


def gen_costs(rng: np.random.Generator, app: AppGraph, phys: PhysGraph,
              max_cost: float, root_cost_divisor: float = 10.0) -> CostModel:
    """I.i.d. uniform placement costs in [0, max_cost).

    The application root's node costs are divided by ``root_cost_divisor``.
    Dummy self-link costs are zero: co-location consumes no link bandwidth.
    """
    if max_cost <= 0:
        raise ValueError("max_cost must be positive")
    v, n, k = app.node_count, phys.node_count, app.resource_count
    node_cost = np.zeros((v + 1, n + 1, k))
    node_cost[1:, 1:, :] = rng.uniform(0.0, max_cost, size=(v, n, k))
    node_cost[1, 1:, :] /= root_cost_divisor
    edge_cost = np.zeros((v + 1, n + 1))
    if v >= 2 and n >= 2:
        edge_cost[2:, 2:] = rng.uniform(0.0, max_cost, size=(v - 1, n - 1))
    self_cost = np.zeros((v + 1, n + 1))
    return CostModel(node_cost, edge_cost, self_cost)


def gen_app(tree_rng: np.random.Generator, pin_rng: np.random.Generator,
            phys: PhysGraph, config: SimConfig) -> AppGraph:
    """One random application: tree, root pinned to the physical root, and
    (in the pinned variant) every junction pinned consistently.

    A junction is pinned uniformly among the subtree of its nearest pinned
    ancestor's target, which keeps an order-preserving completion feasible.
    """
    lo, hi = config.app_size
    size = int(tree_rng.integers(lo, hi + 1))
    tree = gen_tree(tree_rng, size, config.attach_p)
    app = AppGraph.from_tree(tree, k=config.resources, pinned={1: 1})
    if config.variant == "pinned":
        pinned = {1: 1}
        for v in range(2, size + 1):
            if len(tree.children[v]) >= 2:
                anc = tree.parent[v]
                while anc not in pinned:
                    anc = tree.parent[anc]
                options = phys.tree.subtree(pinned[anc])
                pinned[v] = int(options[pin_rng.integers(len(options))])
        app = AppGraph.from_tree(tree, k=config.resources, pinned=pinned)
    return app


def _gen_instance(config: SimConfig, sweep_idx: int, seed_idx: int
                  ) -> tuple[PhysGraph, list[PlacementRequest]]:
    ss = np.random.SeedSequence(config.seed, spawn_key=(sweep_idx, seed_idx))
    tree_rng, cost_rng, pin_rng = (np.random.default_rng(c) for c in ss.spawn(3))

    value = config.sweep_values[sweep_idx]
    if config.sweep == "phys-size":
        n_phys = int(value)
        max_cost = config.max_cost
    else:
        lo, hi = config.phys_size
        n_phys = int(tree_rng.integers(lo, hi + 1))
        max_cost = float(value)

    node_cap = link_cap = None
    if config.capacity is not None:
        node_cap = np.full((n_phys, config.resources), config.capacity)
        link_cap = np.full(max(n_phys - 1, 0), config.capacity)
    phys = PhysGraph(gen_tree(tree_rng, n_phys, config.attach_p), node_cap, link_cap)

    requests = []
    for _ in range(config.num_apps):
        app = gen_app(tree_rng, pin_rng, phys, config)
        model = gen_costs(cost_rng, app, phys, max_cost, config.root_cost_divisor)
        requests.append(PlacementRequest(app, model))
    return phys, requests


# ---------------------------------------------------------------------------
# Greedy baseline at simulation scale
# ---------------------------------------------------------------------------


def _greedy_branch(core: _PlacementCore, lanes: _Lanes, branch) -> None:
    """Greedy chain decomposition of one branch.

    A branch with unplaced junctions is handled by placing its trunk (the
    chain from the branch top descending through the lowest-index child of
    every junction) with the min-max line program, then re-splitting what
    hangs off the trunk and placing those branches the same way, in index
    order.  Junction hosts are thus decided by the chain program that first
    reaches them, not by candidate enumeration; cross-attachment edges are
    charged as routed, without the order-preservation restriction.
    """
    from .branching import Branch, split_members

    if branch.kind != BranchKind.GENERAL:
        core.place(lanes, branch, 0)
        return
    tree = core.app.tree
    members = set(branch.nodes)
    edge_set = set(branch.edges)
    trunk = [min(members)]
    while True:
        kids = [c for c in tree.children[trunk[-1]] if c in members]
        if not kids:
            break
        trunk.append(min(kids))
    top = ([trunk[0]] if trunk[0] in edge_set and tree.parent[trunk[0]] in branch.pins
           else [])
    t_edges = top + trunk[1:]
    t_pins = {}
    if top:
        u = tree.parent[trunk[0]]
        t_pins[u] = branch.pins[u]
    pseudo = Branch(BranchKind.SIMPLE, tuple(trunk), tuple(sorted(t_edges)),
                    t_pins, (), core.app)
    core.place(lanes, pseudo, 0)

    rest_members = members - set(trunk)
    rest_edges = edge_set - set(t_edges)
    if not rest_members and not rest_edges:
        return
    pins2: dict[int, int | None] = dict(branch.pins)
    for x in trunk:
        pins2[x] = None
    pinned_delta, subs = split_members(tree, rest_members, rest_edges, pins2,
                                       core.app)
    if pinned_delta is not None:
        for c in pinned_delta.edges:
            u = tree.parent[c]
            core.apply_edge(lanes, c, core.resolve(lanes, u), core.resolve(lanes, c))
    for sub in subs:
        _greedy_branch(core, lanes, sub)


def greedy_place_dp(state: SystemState, app: AppGraph, phys: PhysGraph,
                    model: CostModel) -> Mapping:
    """Greedy mapping of one application on the incremental min-max objective.

    Branch-by-branch dynamic program: each chain is placed to minimize the
    resulting maximum element load given everything placed so far; branches
    with unplaced junctions are decomposed into chains (see _greedy_branch).
    Honors the fairness rule for children of pinned junctions.
    """
    masks: dict[int, np.ndarray] = {}
    for node, hosts in fairness_allowed(app, phys).items():
        arr = np.zeros(phys.node_count + 1, dtype=np.bool_)
        arr[sorted(hosts)] = True
        masks[node] = arr
    policy = _MaxPolicy(use_state=True, node_allowed=masks)
    core = _PlacementCore(app, model, phys, policy)
    lanes = _Lanes(state.p[None, :, :].copy(), state.q[None, :].copy())
    for branch in split(app):
        _greedy_branch(core, lanes, branch)
        if not lanes.ok[0]:
            raise Infeasible("greedy found no finite-cost placement")
    mapping = dict(app.pinned)
    for v, hosts in lanes.placed.items():
        mapping[v] = int(hosts[0])
    return Mapping.from_dict(mapping, app.node_count)


def run_greedy(app_stream: Sequence[PlacementRequest], phys: PhysGraph
               ) -> tuple[list[str], SystemState]:
    """Greedy driver: place each arriving application, rejecting those that
    are infeasible or would exceed a capacity."""
    k = app_stream[0].model.resource_count if app_stream else 1
    state = SystemState.empty(phys.node_count, k)
    outcomes = []
    for req in app_stream:
        try:
            mapping = greedy_place_dp(state, req.app, phys, req.model)
        except Infeasible:
            outcomes.append("rejected-infeasible")
            continue
        dp, dq = placement_increments(mapping, req.app, req.model, phys)
        if _would_violate(state, dp, dq, phys):
            outcomes.append("rejected-capacity")
            continue
        state.p += dp
        state.q += dq
        state.app_counter += 1
        outcomes.append("placed")
    return outcomes, state


def _would_violate(state: SystemState, dp: np.ndarray, dq: np.ndarray,
                   phys: PhysGraph) -> bool:
    if phys.node_capacity is not None:
        if ((state.p + dp)[1:] > phys.node_capacity).any():
            return True
    if phys.link_capacity is not None:
        if ((state.q + dq)[2:] > phys.link_capacity).any():
            return True
    return False


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------


@dataclass
class SeedOutcome:
    seed: int
    objective: float
    accepted: int
    fails: int
    doublings: int
    wall_time: float


@dataclass
class SweepRow:
    variant: str
    algorithm: str
    sweep_param: float
    mean_obj: float
    stderr: float
    n_valid_seeds: int
    mean_accepted: float
    outcomes: list[SeedOutcome] = field(default_factory=list)


def _final_objective(state: SystemState) -> float:
    worst = 0.0
    if state.p[1:].size:
        worst = max(worst, float(state.p[1:].max()))
    if state.q[2:].size:
        worst = max(worst, float(state.q[2:].max()))
    return worst


def run_experiment(config: SimConfig) -> list[SweepRow]:
    """Run the paired comparison for one variant.

    Both algorithms consume identical generated instances per (sweep point,
    seed).  Means aggregate over seeds whose final objective stays below 1
    (others count as overloaded); acceptance counts average over all seeds.
    """
    rows: list[SweepRow] = []
    for sweep_idx, value in enumerate(config.sweep_values):
        per_alg: dict[str, list[SeedOutcome]] = {a: [] for a in config.algorithms}
        for seed_idx in range(config.num_seeds):
            phys, requests = _gen_instance(config, sweep_idx, seed_idx)
            for alg in config.algorithms:
                start = time.perf_counter()
                if alg == "proposed":
                    log, state = run_online(requests, OnlineConfig(gamma=config.gamma),
                                            phys=phys)
                    accepted = sum(1 for r in log.records if r.outcome == "placed")
                    fails, doublings = log.fail_count, log.doubling_count
                else:
                    outcomes, state = run_greedy(requests, phys)
                    accepted = sum(1 for o in outcomes if o == "placed")
                    fails = doublings = 0
                per_alg[alg].append(SeedOutcome(
                    seed=seed_idx,
                    objective=_final_objective(state),
                    accepted=accepted,
                    fails=fails,
                    doublings=doublings,
                    wall_time=time.perf_counter() - start,
                ))
        for alg in config.algorithms:
            outs = per_alg[alg]
            valid = [o.objective for o in outs if o.objective < 1.0]
            if valid:
                mean = float(np.mean(valid))
                err = float(np.std(valid, ddof=1) / math.sqrt(len(valid))) if len(valid) > 1 else 0.0
            else:
                mean = math.nan
                err = math.nan
            rows.append(SweepRow(
                variant=config.variant,
                algorithm=alg,
                sweep_param=float(value),
                mean_obj=mean,
                stderr=err,
                n_valid_seeds=len(valid),
                mean_accepted=float(np.mean([o.accepted for o in outs])),
                outcomes=outs,
            ))
    return rows


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    """Deterministic CSV: same rows in, same bytes out."""
    lines = ["variant,algorithm,sweep_param,mean_obj,stderr,n_valid_seeds,mean_accepted"]
    for r in rows:
        lines.append(",".join([
            r.variant,
            r.algorithm,
            repr(r.sweep_param),
            repr(r.mean_obj),
            repr(r.stderr),
            str(r.n_valid_seeds),
            repr(r.mean_accepted),
        ]))
    return "\n".join(lines) + "\n"


def emit_per_seed(rows: Sequence[SweepRow], directory: str) -> None:
    """Per-seed JSON files for debugging (wall times included, so these are
    not byte-reproducible, unlike the CSV)."""
    os.makedirs(directory, exist_ok=True)
    for r in rows:
        name = f"{r.variant}_{r.algorithm}_{r.sweep_param:g}.json"
        payload = [
            {
                "seed": o.seed,
                "objective": o.objective,
                "accepted": o.accepted,
                "fails": o.fails,
                "doublings": o.doublings,
                "wall_time": o.wall_time,
            }
            for o in r.outcomes
        ]
        with open(os.path.join(directory, name), "w") as fh:
            json.dump(payload, fh, indent=1)
