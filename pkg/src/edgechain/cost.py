"""Pricing and latency formulas for service-chain placements."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NoRoute, Unplaced
from .model import (
    AppLink,
    HostLink,
    Mecsp,
    MeApp,
    MeHost,
    Placement,
    SvcChain,
    UserDistribution,
    WorldState,
    add_chain,
    apply_assignment,
    remove_assignment,
)


@dataclass(frozen=True)
class CostBreakdown:
    host_cost: float = 0.0
    link_cost: float = 0.0
    latency_ms: float = 0.0

    @property
    def total(self) -> float:
        return self.host_cost + self.link_cost

    def scaled(self, factor: float) -> CostBreakdown:
        return CostBreakdown(self.host_cost * factor, self.link_cost * factor, self.latency_ms)


@dataclass(frozen=True)
class PairPricing:
    kappa_pair: float
    sigma_pair: float


def effective_unit_price(mecsp: Mecsp, dist: UserDistribution) -> float:
    """Per-unit resource price a provider charges for this user mix."""
    return mecsp.gamma + (1.0 - dist.share(mecsp.id)) * mecsp.delta


def host_app_cost(
    app: MeApp,
    host: MeHost,
    owner: Mecsp,
    dist: UserDistribution,
    weights: tuple[float, float] = (1.0, 1.0),
) -> float:
    """Cost of running ``app`` on ``host`` for ``dist.total_users`` users.

    Own subscribers pay the base price gamma; the remaining ``1 - P_m`` share
    additionally pays the premium delta.
    """
    assert host.owner == owner.id, "owner does not match host"
    return dist.total_users * app.weighted_demand(weights) * effective_unit_price(owner, dist)


def pair_pricing(m_i: Mecsp, m_j: Mecsp) -> PairPricing:
    return PairPricing((m_i.kappa + m_j.kappa) / 2.0, (m_i.sigma + m_j.sigma) / 2.0)


def link_unit_price(
    link: HostLink, state: WorldState, prospective: AppLink | None = None
) -> float:
    """Occupancy factor times utilization factor of a HostLink, in [0, 1].

    With ``prospective`` the candidate AppLink is counted as if already
    carried by the link.
    """
    count = state.applink_count(link.id)
    used = state.used_bandwidth(link.id)
    if prospective is not None:
        count += 1
        used += prospective.bandwidth_demand
    return (count / link.max_virtual_links) * (used / link.bandwidth_capacity)


def own_user_fraction(m_i: Mecsp, m_j: Mecsp, dist: UserDistribution) -> float:
    if m_i.id == m_j.id:
        f = dist.share(m_i.id)
    else:
        f = dist.share(m_i.id) + dist.share(m_j.id)
    return min(1.0, max(0.0, f))


def link_cost_from_price(
    zeta: float, m_i: Mecsp, m_j: Mecsp, dist: UserDistribution
) -> float:
    pricing = pair_pricing(m_i, m_j)
    f = own_user_fraction(m_i, m_j, dist)
    kappa, sigma = pricing.kappa_pair, pricing.sigma_pair
    return dist.total_users * zeta * (f * kappa + (1.0 - f) * (kappa + sigma))


def link_cost(
    app_link: AppLink,
    h_i: MeHost,
    h_j: MeHost,
    state: WorldState,
    dist: UserDistribution,
    prospective: bool = True,
) -> float:
    """Traffic cost of one AppLink whose endpoints sit on ``h_i`` and ``h_j``.

    ``prospective=True`` prices the link as if this AppLink were added to it
    (a placement being considered); ``False`` prices the link state as-is
    (auditing a committed placement that already includes the AppLink).
    """
    if h_i.id == h_j.id:
        return 0.0
    hl = state.link_between(h_i.id, h_j.id)
    if hl is None:
        raise NoRoute(h_i.id, h_j.id)
    zeta = link_unit_price(hl, state, app_link if prospective else None)
    return link_cost_from_price(zeta, state.mecsps[h_i.owner], state.mecsps[h_j.owner], dist)


def _require_placed(chain: SvcChain, placement: Placement) -> None:
    missing = [a for a in chain.app_ids if a not in placement]
    if missing:
        raise Unplaced(f"chain {chain.id}: unplaced apps {', '.join(missing)}")


def chain_latency(chain: SvcChain, placement: Placement, state: WorldState) -> float:
    _require_placed(chain, placement)
    total = 0.0
    for link in chain.links:
        hi, hj = placement[link.src], placement[link.dst]
        if hi == hj:
            continue
        hl = state.link_between(hi, hj)
        if hl is None:
            raise NoRoute(hi, hj)
        total += hl.latency_ms
    return total


def _state_realizing(chain: SvcChain, placement: Placement, state: WorldState) -> WorldState:
    """``state`` with exactly ``placement`` applied for the chain's apps."""
    if chain.id not in state.chains:
        state = add_chain(state, chain)
    if all(state.placement.get(a) == placement[a] for a in chain.app_ids):
        return state
    for a in chain.app_ids:
        if a in state.placement:
            state = remove_assignment(state, a)
    for a in chain.app_ids:
        state = apply_assignment(state, a, placement[a])
    return state


def chain_cost(
    chain: SvcChain, placement: Placement, state: WorldState, dist: UserDistribution
) -> CostBreakdown:
    """Objective value of a full chain placement.

    Link prices are read from the state in which the placement is realized:
    if ``state`` already carries it, as-is; otherwise on a scratch copy with
    the placement applied (so every AppLink of the chain is counted).
    """
    _require_placed(chain, placement)
    if not chain.apps:
        return CostBreakdown()
    realized = _state_realizing(chain, placement, state)
    host_cost = math.fsum(
        host_app_cost(
            app,
            realized.hosts[placement[app.id]],
            realized.owner_of(placement[app.id]),
            dist,
            realized.weights,
        )
        for app in chain.apps
    )
    traffic = math.fsum(
        link_cost(
            link,
            realized.hosts[placement[link.src]],
            realized.hosts[placement[link.dst]],
            realized,
            dist,
            prospective=False,
        )
        for link in chain.links
    )
    return CostBreakdown(host_cost, traffic, chain_latency(chain, placement, realized))
