"""The EdgeChain placement heuristic.

Each app of a chain is placed in chain order. Candidate hosts are ranked by
three lexicographic keys (provider preference, last-hop co-location, latency
to the last hop) and scanned first-fit against the constraint checks. Chains
are processed in decreasing order of resource demand.

Two behaviours are configurable through :class:`PlacementOptions`:

``rank_mode``
    ``"cost"`` (default) ranks providers by the unit price they charge for
    this chain's user mix, ``gamma + (1 - P_m) * delta``, then by user share.
    ``"share"`` ranks by user share alone.
``backtrack``
    When the first-fit scan finds no host for some app, retry the next
    feasible host of earlier apps (depth-first, in rank order). The first
    complete assignment found is the plain first-fit result whenever that
    succeeds, so backtracking only changes outcomes that would otherwise be
    infeasible.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum

from .canonical import digest
from .cost import CostBreakdown, chain_cost, effective_unit_price
from .feasibility import check_partial
from .model import SvcChain, UserDistribution, WorldState, add_chain, apply_assignment
from .errors import AlreadyPlaced

ALGORITHM_NAME = "edgechain-placement"
ALGORITHM_VERSION = "1.0"


class Outcome(str, Enum):
    PLACED = "placed"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class PlacementOptions:
    rank_mode: str = "cost"
    backtrack: bool = True
    # apply attempts allowed per chain before giving up
    max_steps: int = 100_000

    def __post_init__(self):
        if self.rank_mode not in ("cost", "share"):
            raise ValueError(f"unknown rank_mode {self.rank_mode!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    @property
    def algorithm_digest(self) -> str:
        return digest(
            {
                "algorithm": ALGORITHM_NAME,
                "version": ALGORITHM_VERSION,
                "rank_mode": self.rank_mode,
                "backtrack": self.backtrack,
                "max_steps": self.max_steps,
            }
        )


DEFAULT_OPTIONS = PlacementOptions()


@dataclass(frozen=True)
class PlacementRequest:
    chain: SvcChain
    dist: UserDistribution


@dataclass(frozen=True)
class PlacementDecision:
    chain_id: str
    assignments: dict[str, str] = field(default_factory=dict)
    cost: CostBreakdown | None = None
    outcome: Outcome = Outcome.PLACED
    reason: str = ""
    algorithm_digest: str = ""

    @property
    def placed(self) -> bool:
        return self.outcome is Outcome.PLACED


def _quantized(x: float) -> float:
    # 9 significant digits: float noise must not split providers that tie exactly
    return float(format(x, ".9g"))


def _last_hop(app_id: str, chain: SvcChain, placed_prefix: Mapping[str, str]) -> list[str]:
    peers = []
    for link in chain.links_of(app_id):
        peer = link.dst if link.src == app_id else link.src
        if peer in placed_prefix:
            peers.append(peer)
    return peers


def rank_hosts(
    app_id: str,
    chain: SvcChain,
    placed_prefix: Mapping[str, str],
    state: WorldState,
    dist: UserDistribution,
    rank_mode: str = "cost",
) -> list[str]:
    """All hosts, best candidate first."""
    peer_hosts = [placed_prefix[p] for p in _last_hop(app_id, chain, placed_prefix)]

    def key(host_id: str):
        owner = state.owner_of(host_id)
        share = dist.share(owner.id)
        if rank_mode == "cost":
            provider = (_quantized(effective_unit_price(owner, dist)), -share)
        else:
            provider = (-share,)
        hosts_last_hop = 0 if not peer_hosts or host_id in peer_hosts else 1
        latency = 0.0
        for ph in peer_hosts:
            if ph == host_id:
                continue
            hl = state.link_between(host_id, ph)
            latency += math.inf if hl is None else hl.latency_ms
        return (provider, hosts_last_hop, latency, host_id)

    return sorted(state.hosts, key=key)


def place_app(
    app_id: str,
    chain: SvcChain,
    placed_prefix: Mapping[str, str],
    state: WorldState,
    dist: UserDistribution,
    options: PlacementOptions = DEFAULT_OPTIONS,
) -> tuple[str | None, WorldState]:
    """First ranked host passing the partial checks, with the assignment applied."""
    for host_id in rank_hosts(app_id, chain, placed_prefix, state, dist, options.rank_mode):
        if not check_partial(state, chain, placed_prefix, (app_id, host_id), dist):
            return host_id, apply_assignment(state, app_id, host_id)
    return None, state


class _BudgetExhausted(Exception):
    pass


def place_chain(
    request: PlacementRequest,
    state: WorldState,
    options: PlacementOptions = DEFAULT_OPTIONS,
) -> tuple[PlacementDecision, WorldState]:
    """Place every app of a chain or none of them."""
    chain, dist = request.chain, request.dist
    algo = options.algorithm_digest
    working = state if chain.id in state.chains else add_chain(state, chain)
    for a in chain.app_ids:
        if a in working.placement:
            raise AlreadyPlaced(f"app {a} of chain {chain.id} is already placed")

    apps = chain.app_ids
    steps = 0
    first_failure: list[str] = []

    def search(i: int, st: WorldState, prefix: dict[str, str]):
        nonlocal steps
        if i == len(apps):
            return st, prefix
        app_id = apps[i]
        tried = False
        for host_id in rank_hosts(app_id, chain, prefix, st, dist, options.rank_mode):
            if check_partial(st, chain, prefix, (app_id, host_id), dist):
                continue
            steps += 1
            if steps > options.max_steps:
                raise _BudgetExhausted
            tried = True
            found = search(i + 1, apply_assignment(st, app_id, host_id), {**prefix, app_id: host_id})
            if found is not None or not options.backtrack:
                return found
        if not tried and not first_failure:
            first_failure.append(app_id)
        return None

    try:
        found = search(0, working, {})
        reason = f"no feasible host for {first_failure[0]}" if first_failure else ""
    except _BudgetExhausted:
        found, reason = None, f"search budget of {options.max_steps} steps exhausted"

    if found is None:
        return (
            PlacementDecision(chain.id, {}, None, Outcome.INFEASIBLE, reason, algo),
            state,
        )
    final, assignments = found
    cost = chain_cost(chain, assignments, final, dist)
    return PlacementDecision(chain.id, assignments, cost, Outcome.PLACED, "", algo), final


def processing_order(
    requests: list[PlacementRequest], weights: tuple[float, float] = (1.0, 1.0)
) -> list[PlacementRequest]:
    """Decreasing weighted demand, ties by chain id."""
    return sorted(requests, key=lambda r: (-r.chain.demand(weights), r.chain.id))


def place_all(
    requests: list[PlacementRequest],
    state: WorldState,
    options: PlacementOptions = DEFAULT_OPTIONS,
) -> tuple[list[PlacementDecision], WorldState]:
    decisions = []
    for request in processing_order(requests, state.weights):
        decision, state = place_chain(request, state, options)
        decisions.append(decision)
    return decisions, state
