"""Online placement of arriving tree application graphs.

Each arriving application is split into branch applications (the pre-placed
nodes first, then each branch).  Simple branches are placed by the exact line
solver under the exponential-difference objective: an element with adjusted
load P contributes alpha**((P+x)/J) - alpha**(P/J) when the placement adds x
to it.  A placement FAILs when some adjusted element would exceed beta *
J_hat, where beta = log_alpha(gamma (NK + L) / (gamma - 1)); the driver then
doubles the reference cost J_hat, snapshots the current loads as the new
epoch baseline, and retries.

Branches containing unplaced junction nodes are handled by enumerating the
candidate hosts of the top-most junction, recursively placing the
sub-branches under each candidate, and keeping the candidate with the lowest
exponential difference evaluated at reference beta**h * J_hat; the failure
threshold at the top of the recursion is beta**(1+H) * J_hat.

The same machinery, scored by the plain incremental min-max objective
instead of exponential differences, doubles as the greedy baseline and as a
feasibility probe (a placement is structurally infeasible only if its
cost is infinite under raw costs, which the probe checks without any
exponential overflow).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernel
from .branching import Branch, BranchKind, split, split_at_junction
from .costs import CostModel, Mapping, SystemState
from .graphs import AppGraph, PhysGraph, junction_analysis
from .line_dp import Infeasible

__all__ = [
    "OnlineConfig",
    "AppRecord",
    "EpochLog",
    "PlacementRequest",
    "place_branch",
    "place_unplaced",
    "run_online",
]

INF = math.inf


@dataclass
class OnlineConfig:
    """Tuning of the online engine.

    gamma    design parameter > 1; alpha = 1 + 1/gamma.
    j_hat_0  initial reference cost.  None picks the smallest strictly
             positive finite entry of the first application's cost model (a
             too-small start only costs extra doubling rounds).
    doubling when False the reference cost stays fixed; FAIL events are
             still recorded but the computed mapping is committed anyway
             (instrumentation mode for bound experiments).
    record_phi  trace the potential function after every branch application;
             requires reference mappings passed to run_online.
    """

    gamma: float = 2.0
    j_hat_0: float | None = None
    doubling: bool = True
    record_phi: bool = False

    def __post_init__(self) -> None:
        if not self.gamma > 1.0:
            raise ValueError("gamma must be > 1")
        if self.j_hat_0 is not None and not self.j_hat_0 > 0:
            raise ValueError("j_hat_0 must be positive")

    @property
    def alpha(self) -> float:
        return 1.0 + 1.0 / self.gamma

    def beta(self, n: int, k: int, l: int) -> float:
        """Failure threshold multiplier for an N-node, K-resource, L-link
        system; recomputed whenever the topology changes."""
        arg = self.gamma * (n * k + l) / (self.gamma - 1.0)
        return math.log(arg) / math.log(self.alpha)


@dataclass
class PlacementRequest:
    app: AppGraph
    model: CostModel


@dataclass
class AppRecord:
    app_id: int
    outcome: str               # "placed" | "rejected-infeasible" | "rejected-capacity"
    mapping: dict[int, int] | None
    j_hat: float
    objective_after: float
    fails: int


@dataclass
class EpochLog:
    """What happened, application by application."""

    j_hat_history: list[float] = field(default_factory=list)
    records: list[AppRecord] = field(default_factory=list)
    phi: list[float] = field(default_factory=list)
    fail_count: int = 0
    doubling_count: int = 0
    branch_apps: int = 0

    @property
    def j_hat_final(self) -> float:
        return self.j_hat_history[-1]

    def to_json(self) -> str:
        return json.dumps({
            "j_hat_history": self.j_hat_history,
            "fail_count": self.fail_count,
            "doubling_count": self.doubling_count,
            "branch_apps": self.branch_apps,
            "phi": self.phi,
            "apps": [
                {
                    "app_id": r.app_id,
                    "outcome": r.outcome,
                    "mapping": r.mapping,
                    "j_hat": r.j_hat,
                    "objective_after": r.objective_after,
                    "fails": r.fails,
                }
                for r in self.records
            ],
        })


# ---------------------------------------------------------------------------
# Lane context: a batch of trial placements explored in parallel.
# ---------------------------------------------------------------------------


class _Lanes:
    """Candidate trial states: adjusted loads plus resolved node hosts."""

    def __init__(self, p: np.ndarray, q: np.ndarray):
        self.p = p                    # (B, N+1, K)
        self.q = q                    # (B, N+1)
        self.placed: dict[int, np.ndarray] = {}
        self.ok = np.ones(p.shape[0], dtype=np.bool_)

    @property
    def B(self) -> int:
        return self.p.shape[0]

    def expand(self, c: int) -> None:
        self.p = np.repeat(self.p, c, axis=0)
        self.q = np.repeat(self.q, c, axis=0)
        self.ok = np.repeat(self.ok, c)
        self.placed = {v: np.repeat(a, c) for v, a in self.placed.items()}

    def gather(self, idx: np.ndarray) -> None:
        self.p = np.ascontiguousarray(self.p[idx])
        self.q = np.ascontiguousarray(self.q[idx])
        self.ok = self.ok[idx]
        self.placed = {v: a[idx] for v, a in self.placed.items()}


@dataclass
class _LineSkeleton:
    """A simple branch flattened into per-position cost rows.

    Sentinel row 0 of the cost model makes added zero-demand endpoints free:
    their node id is 0 and gathering row 0 yields zeros.
    """

    vn: int
    node_ids: np.ndarray          # (Vn+1,) int32
    edge_ids: np.ndarray          # (Vn+1,) int32
    d: np.ndarray                 # (Vn+1, N+1, K)
    braw: np.ndarray              # (Vn+1, N+1)
    bself: np.ndarray             # (Vn+1, N+1)
    static_pin: np.ndarray        # (Vn+1,) int32, 0 = free here
    anchors: list[tuple[int, int]]  # (line position, app node resolved at run time)


def chain_structure(branch: Branch) -> tuple[list[int], int | None, int | None]:
    """Members in chain order plus the open edges above and below the chain.

    Raises Infeasible-free structural errors via NotASimpleBranch upstream;
    here the branch is trusted (it came from split).
    """
    app = branch.source
    members = list(branch.nodes)
    member_set = set(members)
    top_edge = bottom_edge = None
    for c in branch.edges:
        u = app.tree.parent[c]
        if c in member_set and u in member_set:
            continue
        if c == members[0]:
            top_edge = c
        else:
            bottom_edge = c
    return members, top_edge, bottom_edge


class _ExpPolicy:
    """Exponential-difference scoring (the proposed algorithm)."""

    form = 1

    def __init__(self, alpha: float, j_hat: float, beta: float):
        self.alpha = alpha
        self.j_hat = j_hat
        self.beta = beta
        self.c = math.log(alpha) / j_hat
        # Chains placed inside a junction enumeration go through the simple
        # placement procedure including its failure rule: a candidate whose
        # chain pushes some element beyond beta * J_hat is discarded.
        self.chain_fail_threshold: float | None = beta * j_hat

    def kernel_inputs(self, lanes: _Lanes, sk: _LineSkeleton):
        with np.errstate(over="ignore"):
            node_a = np.exp(lanes.p * self.c)
            scale_q = np.exp(lanes.q * self.c)
            em = np.expm1(sk.braw * self.c)
        econn = np.where(em[None, :, :] == 0.0, 0.0,
                         scale_q[:, None, :] * em[None, :, :])
        eself = np.where(np.isinf(sk.bself), INF, 0.0)
        return node_a, self.c, econn, eself

    def allowed(self, sk: _LineSkeleton, n: int) -> np.ndarray:
        return np.ones((sk.vn + 1, n + 1), dtype=np.bool_)

    def junction_allowed(self, v: int) -> np.ndarray | None:
        return None

    def select(self, lanes: _Lanes, entry_p: np.ndarray, entry_q: np.ndarray,
               h: int) -> np.ndarray:
        c = math.log(self.alpha) / (self.beta ** h * self.j_hat)
        out = np.empty(lanes.B)
        _kernel.exp_diff_total(lanes.p, lanes.q, entry_p, entry_q, c, out)
        return out


class _MaxPolicy:
    """Incremental min-max scoring (greedy baseline / feasibility probe)."""

    form = 0

    def __init__(self, use_state: bool = True,
                 node_allowed: dict[int, np.ndarray] | None = None):
        self.use_state = use_state
        self.node_allowed = node_allowed or {}
        self.chain_fail_threshold: float | None = None

    def kernel_inputs(self, lanes: _Lanes, sk: _LineSkeleton):
        if self.use_state:
            node_a = lanes.p
            econn = np.where(sk.braw[None, :, :] > 0.0,
                             lanes.q[:, None, :] + sk.braw[None, :, :], 0.0)
        else:
            node_a = np.zeros_like(lanes.p)
            econn = np.broadcast_to(sk.braw, (lanes.B,) + sk.braw.shape).copy()
        eself = np.where(np.isinf(sk.bself), INF, 0.0)
        return node_a, 0.0, econn, eself

    def allowed(self, sk: _LineSkeleton, n: int) -> np.ndarray:
        out = np.ones((sk.vn + 1, n + 1), dtype=np.bool_)
        for pos in range(1, sk.vn + 1):
            v = int(sk.node_ids[pos])
            if v and v in self.node_allowed:
                out[pos] = self.node_allowed[v]
        return out

    def junction_allowed(self, v: int) -> np.ndarray | None:
        return self.node_allowed.get(v)

    def select(self, lanes: _Lanes, entry_p: np.ndarray, entry_q: np.ndarray,
               h: int) -> np.ndarray:
        out = np.empty(lanes.B)
        _kernel.state_max(lanes.p, lanes.q, out)
        return out


class _PlacementCore:
    """Places one branch application over a batch of trial lanes."""

    def __init__(self, app: AppGraph, model: CostModel, phys: PhysGraph, policy):
        self.app = app
        self.model = model
        self.phys = phys
        self.policy = policy
        self.n = phys.node_count
        self.k = model.resource_count
        self.parent = phys.tree.parent_array()
        self.depth = np.asarray([phys.tree._depth[i] for i in range(self.n + 1)],
                                dtype=np.int32)
        self._skeletons: dict[tuple, _LineSkeleton] = {}
        self._subsplits: dict[tuple, tuple[list[int], list[Branch]]] = {}

    # -- helpers ---------------------------------------------------------

    def resolve(self, lanes: _Lanes, node: int) -> np.ndarray:
        """Per-lane host of an already-placed app node."""
        if node in lanes.placed:
            return lanes.placed[node]
        target = self.app.pinned[node]
        return np.full(lanes.B, target, dtype=np.int32)

    def skeleton(self, branch: Branch) -> _LineSkeleton:
        key = (branch.nodes, branch.edges)
        sk = self._skeletons.get(key)
        if sk is not None:
            return sk
        members, top_edge, bottom_edge = chain_structure(branch)
        node_ids = [0]
        anchors: list[tuple[int, int]] = []
        if top_edge is not None:
            node_ids.append(0)
            anchors.append((len(node_ids) - 1, self.app.tree.parent[top_edge]))
        node_ids.extend(members)
        if bottom_edge is not None:
            node_ids.append(0)
            anchors.append((len(node_ids) - 1, bottom_edge))
        vn = len(node_ids) - 1
        edge_ids = [0, 0]
        for pos in range(2, vn + 1):
            if pos == 2 and top_edge is not None:
                edge_ids.append(top_edge)
            elif pos == vn and bottom_edge is not None:
                edge_ids.append(bottom_edge)
            else:
                edge_ids.append(node_ids[pos])
        nid = np.asarray(node_ids, dtype=np.int32)
        eid = np.asarray(edge_ids[:vn + 1], dtype=np.int32)
        sk = _LineSkeleton(
            vn=vn,
            node_ids=nid,
            edge_ids=eid,
            d=np.ascontiguousarray(self.model.node_cost[nid]),
            braw=np.ascontiguousarray(self.model.edge_cost[eid]),
            bself=np.ascontiguousarray(self.model.self_cost[eid]),
            static_pin=np.zeros(vn + 1, dtype=np.int32),
            anchors=anchors,
        )
        self._skeletons[key] = sk
        return sk

    def _pin_array(self, lanes: _Lanes, sk: _LineSkeleton) -> np.ndarray:
        pin = np.tile(sk.static_pin, (lanes.B, 1))
        for pos, node in sk.anchors:
            pin[:, pos] = self.resolve(lanes, node)
        return pin

    # -- branch placement ------------------------------------------------

    def place(self, lanes: _Lanes, branch: Branch, h: int) -> None:
        if branch.kind == BranchKind.PINNED_SET:
            self.place_pinned(lanes, branch)
        elif branch.kind == BranchKind.SIMPLE:
            self.place_simple(lanes, branch)
        else:
            self.place_general(lanes, branch, h)

    def place_pinned(self, lanes: _Lanes, branch: Branch) -> None:
        for v in branch.nodes:
            target = branch.pins[v]
            row = self.model.node_cost[v, target, :]
            if np.isinf(row).any():
                lanes.ok[:] = False
                return
            lanes.p[:, target, :] += row
        for c in branch.edges:
            u = self.app.tree.parent[c]
            a = self.resolve(lanes, u)
            b = self.resolve(lanes, c)
            self.apply_edge(lanes, c, a, b)

    def apply_edge(self, lanes: _Lanes, edge: int, a: np.ndarray, b: np.ndarray) -> None:
        bad = np.zeros(lanes.B, dtype=np.bool_)
        _kernel.accumulate_edge(
            self.parent, self.depth,
            np.ascontiguousarray(a, dtype=np.int32),
            np.ascontiguousarray(b, dtype=np.int32),
            np.ascontiguousarray(self.model.edge_cost[edge]),
            np.ascontiguousarray(self.model.self_cost[edge]),
            lanes.q, bad)
        lanes.ok &= ~bad

    def place_simple(self, lanes: _Lanes, branch: Branch) -> None:
        sk = self.skeleton(branch)
        pin = self._pin_array(lanes, sk)
        node_a, cexp, econn, eself = self.policy.kernel_inputs(lanes, sk)
        allowed = self.policy.allowed(sk, self.n)
        b = lanes.B
        J = np.empty((b, sk.vn + 1, self.n + 1))
        bp_vs = np.zeros((b, sk.vn + 1, self.n + 1), dtype=np.int32)
        bp_m = np.zeros((b, sk.vn + 1, self.n + 1), dtype=np.int32)
        _kernel.line_dp(self.policy.form, self.parent, sk.d,
                        np.ascontiguousarray(node_a), cexp,
                        np.ascontiguousarray(econn), eself, pin, allowed,
                        J, bp_vs, bp_m)
        col = np.zeros(b, dtype=np.int32)
        val = np.zeros(b)
        _kernel.final_column(J, pin, col, val)
        assign = np.zeros((b, sk.vn + 1), dtype=np.int32)
        _kernel.backtrack(bp_vs, bp_m, col, assign)
        lanes.ok &= np.isfinite(val)
        _kernel.accumulate_lines(self.parent, self.depth, assign, sk.d, sk.braw,
                                 lanes.p, lanes.q)
        for pos in range(1, sk.vn + 1):
            v = int(sk.node_ids[pos])
            if v:
                lanes.placed[v] = assign[:, pos].copy()

    def place_general(self, lanes: _Lanes, branch: Branch, h: int) -> None:
        v = branch.top_junction
        finite = np.isfinite(self.model.node_cost[v, 1:, :]).all(axis=1)
        mask = self.policy.junction_allowed(v)
        if mask is not None:
            finite &= mask[1:]
        cands = np.flatnonzero(finite) + 1
        if cands.size == 0:
            lanes.ok[:] = False
            return
        entry_p, entry_q = lanes.p.copy(), lanes.q.copy()
        b0 = lanes.B
        c_count = cands.size
        lanes.expand(c_count)
        cand_arr = np.tile(cands.astype(np.int32), b0)
        lanes.placed[v] = cand_arr
        rows = np.arange(lanes.B)
        lanes.p[rows, cand_arr, :] += self.model.node_cost[v, cand_arr, :]

        key = (branch.nodes, branch.edges, v)
        cached = self._subsplits.get(key)
        if cached is None:
            cached = split_at_junction(self.app.tree, branch, v)
            self._subsplits[key] = cached
        direct_edges, subs = cached
        for c in direct_edges:
            u = self.app.tree.parent[c]
            a = self.resolve(lanes, u)
            bb = self.resolve(lanes, c)
            self.apply_edge(lanes, c, a, bb)
        threshold = getattr(self.policy, "chain_fail_threshold", None)
        if threshold is not None:
            out = np.empty(lanes.B)
            _kernel.state_max(lanes.p, lanes.q, out)
            lanes.ok &= out <= threshold
        for sub in subs:
            self.place(lanes, sub, h - 1)
            if threshold is not None and sub.kind != BranchKind.GENERAL:
                out = np.empty(lanes.B)
                _kernel.state_max(lanes.p, lanes.q, out)
                lanes.ok &= out <= threshold

        values = self.policy.select(
            lanes,
            np.repeat(entry_p, c_count, axis=0),
            np.repeat(entry_q, c_count, axis=0),
            h,
        )
        values = np.where(lanes.ok, values, INF)
        choice = np.argmin(values.reshape(b0, c_count), axis=1)
        lanes.gather(np.arange(b0) * c_count + choice)


# ---------------------------------------------------------------------------
# Public single-branch operations (Algorithm interfaces)
# ---------------------------------------------------------------------------


def _branch_threshold(config: OnlineConfig, phys: PhysGraph, k: int,
                      j_hat: float, h: int) -> float:
    beta = config.beta(phys.node_count, k, phys.link_count)
    return beta ** (1 + h) * j_hat if h > 0 else beta * j_hat


def _single_lane(state: SystemState) -> _Lanes:
    p, q = state.adjusted()
    return _Lanes(p[None, :, :].copy(), q[None, :].copy())


def _branch_mapping(lanes: _Lanes, branch_nodes: Iterable[int]) -> dict[int, int]:
    return {v: int(lanes.placed[v][0]) for v in branch_nodes if v in lanes.placed}


def place_branch(state: SystemState, branch: Branch, config: OnlineConfig,
                 model: CostModel, phys: PhysGraph,
                 j_hat: float | None = None) -> dict[int, int] | None:
    """Place one simple branch or placed-node set against an adjusted state.

    Returns the branch's node placements, or None (FAIL) when some adjusted
    element would exceed beta * j_hat afterwards.  Raises Infeasible when no
    finite-cost placement exists (the caller rejects such applications
    instead of doubling).
    """
    if branch.kind == BranchKind.GENERAL:
        raise ValueError("branch has unplaced junctions; use place_unplaced")
    if j_hat is None:
        j_hat = config.j_hat_0
    if j_hat is None or j_hat <= 0:
        raise ValueError("a positive reference cost is required")
    beta = config.beta(phys.node_count, model.resource_count, phys.link_count)
    policy = _ExpPolicy(config.alpha, j_hat, beta)
    core = _PlacementCore(branch.source, model, phys, policy)
    lanes = _single_lane(state)
    core.place(lanes, branch, 0)
    if not lanes.ok[0]:
        if _probe_feasible(branch, model, phys, 0):
            return None
        raise Infeasible("branch admits no finite-cost placement")
    if _lanes_max(lanes) > beta * j_hat:
        return None
    mapping = _branch_mapping(lanes, branch.nodes)
    if branch.kind == BranchKind.PINNED_SET:
        mapping = {v: branch.pins[v] for v in branch.nodes}
    return mapping


def place_unplaced(state: SystemState, branch: Branch, v: int, h: int,
                   config: OnlineConfig, model: CostModel, phys: PhysGraph,
                   j_hat: float | None = None) -> dict[int, int] | None:
    """Place a general branch by enumerating hosts of its top junction v.

    ``h`` is the recursion budget, initially the application's H; the
    failure threshold beta**(1+h) * j_hat is checked here, at the top of the
    recursion only.
    """
    if branch.kind != BranchKind.GENERAL:
        raise ValueError("branch has no unplaced junctions; use place_branch")
    if v != branch.top_junction:
        raise ValueError(f"v={v} is not the branch's top-most unplaced junction")
    if h < 1:
        raise ValueError("h must be >= 1 for a branch with unplaced junctions")
    if j_hat is None:
        j_hat = config.j_hat_0
    if j_hat is None or j_hat <= 0:
        raise ValueError("a positive reference cost is required")
    beta = config.beta(phys.node_count, model.resource_count, phys.link_count)
    policy = _ExpPolicy(config.alpha, j_hat, beta)
    core = _PlacementCore(branch.source, model, phys, policy)
    lanes = _single_lane(state)
    core.place_general(lanes, branch, h)
    if not lanes.ok[0]:
        if _probe_feasible(branch, model, phys, h):
            return None
        raise Infeasible("branch admits no finite-cost placement")
    if _lanes_max(lanes) > beta ** (1 + h) * j_hat:
        return None
    return _branch_mapping(lanes, branch.nodes)


def _lanes_max(lanes: _Lanes) -> float:
    out = np.empty(lanes.B)
    _kernel.state_max(lanes.p, lanes.q, out)
    return float(out[0])


def _probe_feasible(branch: Branch, model: CostModel, phys: PhysGraph, h: int) -> bool:
    """Does the branch admit any finite-cost placement at all?

    Runs the same machinery under raw costs (no exponentials), so an
    infinite optimum here is structural, not numeric overflow.
    """
    core = _PlacementCore(branch.source, model, phys, _MaxPolicy(use_state=False))
    n, k = phys.node_count, model.resource_count
    lanes = _Lanes(np.zeros((1, n + 1, k)), np.zeros((1, n + 1)))
    core.place(lanes, branch, h)
    return bool(lanes.ok[0]) and math.isfinite(_lanes_max(lanes))


# ---------------------------------------------------------------------------
# The high-level driver
# ---------------------------------------------------------------------------


def _as_requests(app_stream: Sequence, model: CostModel | None) -> list[PlacementRequest]:
    out = []
    for item in app_stream:
        if isinstance(item, PlacementRequest):
            out.append(item)
        elif isinstance(item, tuple):
            out.append(PlacementRequest(item[0], item[1]))
        else:
            if model is None:
                raise ValueError("bare AppGraph stream items need a shared model")
            out.append(PlacementRequest(item, model))
    return out


class _Phi:
    """Potential-function instrumentation against a reference offline mapping."""

    def __init__(self, n: int, k: int, gamma: float, alpha: float):
        self.p_o = np.zeros((n + 1, k))
        self.q_o = np.zeros(n + 1)
        self.gamma = gamma
        self.alpha = alpha

    def add_branch(self, core: _PlacementCore, branch: Branch, ref: Mapping) -> None:
        lanes = _Lanes(self.p_o[None, :, :], self.q_o[None, :])
        for v in branch.nodes:
            lanes.p[0, ref[v], :] += core.model.node_cost[v, ref[v], :]
        for c in branch.edges:
            u = core.app.tree.parent[c]
            a = np.asarray([ref[u]], dtype=np.int32)
            b = np.asarray([ref[c]], dtype=np.int32)
            core.apply_edge(lanes, c, a, b)
        self.p_o = lanes.p[0]
        self.q_o = lanes.q[0]

    def value(self, state: SystemState, j_hat: float) -> float:
        p, q = state.adjusted()
        n = p.shape[0] - 1
        total = 0.0
        for i in range(1, n + 1):
            for k in range(p.shape[1]):
                total += self.alpha ** (p[i, k] / j_hat) * (self.gamma - self.p_o[i, k] / j_hat)
            if i >= 2:
                total += self.alpha ** (q[i] / j_hat) * (self.gamma - self.q_o[i] / j_hat)
        return total


def run_online(app_stream: Sequence, config: OnlineConfig,
               model: CostModel | None = None, phys: PhysGraph | None = None,
               reference_mappings: Sequence[Mapping] | None = None) -> tuple[EpochLog, SystemState]:
    """Drive the doubling procedure over a stream of application graphs.

    Applications are split into branch applications and placed sequentially
    with no lookahead.  On FAIL the reference cost doubles, the epoch
    baseline resets to the current loads, and the failed branch retries.  An
    application whose placement is infeasible, or whose committed loads would
    exceed a declared capacity, is rejected as a whole: the engine state
    (including the reference cost) is restored to the pre-arrival snapshot.

    Returns the log and the final accumulated state.
    """
    if phys is None:
        raise ValueError("a physical graph is required")
    requests = _as_requests(app_stream, model)
    n = phys.node_count
    k = requests[0].model.resource_count if requests else 1
    state = SystemState.empty(n, k)
    log = EpochLog()

    j_hat = config.j_hat_0
    if j_hat is None:
        j_hat = 1.0
        for req in requests:
            seed = req.model.min_positive_entry()
            if math.isfinite(seed):
                j_hat = seed
                break
    log.j_hat_history.append(j_hat)

    phi = None
    if config.record_phi:
        if reference_mappings is None:
            raise ValueError("record_phi requires reference mappings")
        phi = _Phi(n, k, config.gamma, config.alpha)
        log.phi.append(phi.value(state, j_hat))  # gamma * (NK + L) before any placement

    for app_id, req in enumerate(requests):
        app, app_model = req.app, req.model
        if app_model.resource_count != k:
            raise ValueError("all applications must share the resource count K")
        report = junction_analysis(app)
        h_app = report.h
        beta = config.beta(n, k, phys.link_count)
        branches = split(app)

        snapshot = (state.copy(), j_hat, log.fail_count, log.doubling_count,
                    log.branch_apps, len(log.j_hat_history), len(log.phi),
                    None if phi is None else (phi.p_o.copy(), phi.q_o.copy()))
        mapping: dict[int, int] = {}
        fails_this_app = 0
        rejected = None

        for branch in branches:
            placed_lanes = None
            while True:
                policy = _ExpPolicy(config.alpha, j_hat, beta)
                core = _PlacementCore(app, app_model, phys, policy)
                lanes = _single_lane(state)
                for node, host in mapping.items():
                    lanes.placed[node] = np.full(1, host, dtype=np.int32)
                h = h_app if branch.kind == BranchKind.GENERAL else 0
                core.place(lanes, branch, h)

                if not lanes.ok[0]:
                    if _probe_feasible(branch, app_model, phys, h):
                        failed = True  # numeric saturation; doubling resolves it
                    else:
                        rejected = "rejected-infeasible"
                        break
                else:
                    threshold = (beta ** (1 + h) if h > 0 else beta) * j_hat
                    failed = _lanes_max(lanes) > threshold

                if failed:
                    log.fail_count += 1
                    fails_this_app += 1
                    if config.doubling:
                        j_hat *= 2.0
                        log.doubling_count += 1
                        log.j_hat_history.append(j_hat)
                        state.snapshot_baseline()
                        continue
                    if not lanes.ok[0]:
                        rejected = "rejected-infeasible"
                        break
                placed_lanes = lanes
                break

            if rejected:
                break

            # Commit this branch application.
            adj_p, adj_q = state.adjusted()
            state.p += placed_lanes.p[0] - adj_p
            state.q += placed_lanes.q[0] - adj_q
            state.app_counter += 1
            log.branch_apps += 1
            if branch.kind == BranchKind.PINNED_SET:
                mapping.update({v: branch.pins[v] for v in branch.nodes})
            else:
                mapping.update(_branch_mapping(placed_lanes, branch.nodes))
            if phi is not None:
                phi.add_branch(core, branch, reference_mappings[app_id])
                log.phi.append(phi.value(state, j_hat))

        if not rejected and (phys.node_capacity is not None or phys.link_capacity is not None):
            if _capacity_violated(state, phys):
                rejected = "rejected-capacity"

        if rejected:
            prev, j_hat, log.fail_count, log.doubling_count, log.branch_apps, \
                hist_len, phi_len, phi_snap = snapshot
            state = prev
            del log.j_hat_history[hist_len:]
            del log.phi[phi_len:]
            if phi is not None:
                phi.p_o, phi.q_o = phi_snap
            log.records.append(AppRecord(app_id, rejected, None, j_hat,
                                         _objective(state), fails_this_app))
        else:
            log.records.append(AppRecord(app_id, "placed", dict(sorted(mapping.items())),
                                         j_hat, _objective(state), fails_this_app))

    return log, state


def _objective(state: SystemState) -> float:
    worst = 0.0
    if state.p[1:].size:
        worst = max(worst, float(state.p[1:].max()))
    if state.q[2:].size:
        worst = max(worst, float(state.q[2:].max()))
    return worst


def _capacity_violated(state: SystemState, phys: PhysGraph) -> bool:
    if phys.node_capacity is not None:
        if (state.p[1:] > phys.node_capacity).any():
            return True
    if phys.link_capacity is not None:
        if (state.q[2:] > phys.link_capacity).any():
            return True
    return False
