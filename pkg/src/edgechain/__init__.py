"""Multi-provider edge application placement with a replicated ledger."""

from __future__ import annotations

from .consensus import Validator, audit_round, decision_digest, forge_decision, run_round
from .cost import CostBreakdown, chain_cost, chain_latency, host_app_cost, link_cost, pair_pricing
from .errors import (
    CapacityExceeded,
    EdgeChainError,
    InvalidChain,
    NoRoute,
    ReplayError,
    TooLarge,
    ValidationError,
)
from .feasibility import Violation, ViolationKind, check_partial, check_placement
from .harness import run_compare, run_simulation, run_sweep
from .ledger import (
    append_block,
    open_ledger,
    post_placement,
    post_request,
    read_ledger,
    replay_state,
    verify_chain,
    write_ledger,
)
from .model import (
    AppLink,
    HostLink,
    MeApp,
    Mecsp,
    MeHost,
    SvcChain,
    UserDistribution,
    WorldState,
    add_chain,
    apply_assignment,
    build_world,
    remove_assignment,
    world,
)
from .oracle import OracleResult, solve_exact
from .placement import (
    Outcome,
    PlacementDecision,
    PlacementOptions,
    PlacementRequest,
    place_all,
    place_app,
    place_chain,
)
from .scenario import ScenarioConfig, SweepSpec, bundled_scenario, load_scenario

__version__ = "0.1.0"
