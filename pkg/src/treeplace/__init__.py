"""Placement of tree-shaped application graphs onto tree physical topologies.

Exact optimal placement for linear applications, online competitive
placement for arriving tree applications, exhaustive oracles for
verification, and a synthetic-workload simulator.
"""

from .graphs import (
    AppGraph,
    CycleDetected,
    Disconnected,
    DuplicateParent,
    IndexedTree,
    InvalidIndex,
    PhysGraph,
    build_tree,
    junction_analysis,
    tree_path,
)
from .costs import (
    CapacityReport,
    CostModel,
    InfiniteCost,
    Mapping,
    SystemState,
    accumulate,
    check_capacity,
    objective,
    pairwise_cost,
)
from .branching import Branch, BranchKind, NoPinnedAnchor, split
from .line_dp import (
    DpTables,
    ExtendedLine,
    Infeasible,
    LineResult,
    NotASimpleBranch,
    ObjectiveForm,
    ObjectiveSpec,
    extend_open_edges,
    place_line,
    recover_mapping,
)
from .online import (
    AppRecord,
    EpochLog,
    OnlineConfig,
    PlacementRequest,
    place_branch,
    place_unplaced,
    run_online,
)
from .oracles import (
    BudgetExceeded,
    ItemOversized,
    OracleBudget,
    brute_force_cycle_free,
    brute_force_offline_joint,
    brute_force_with_cycles,
    first_fit_ordered,
    greedy_place,
)
from .sim import SimConfig, gen_costs, gen_tree, run_experiment, rows_to_csv

__version__ = "0.1.0"
