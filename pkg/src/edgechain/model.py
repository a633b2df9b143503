"""Domain entities and the world state shared by every other module.

A :class:`WorldState` is treated as a value: every mutating operation returns
a new state and leaves its input untouched. Resource usage is kept as the set
of individual contributions (per app on a host, per AppLink on a HostLink) so
that applying and removing an assignment are exact inverses and the usage can
be recomputed from the placement with bit-identical results.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from .errors import (
    AlreadyPlaced,
    CapacityExceeded,
    DanglingReference,
    DuplicateId,
    NoRoute,
    NotPlaced,
    UnknownEntity,
    ValidationError,
)

# Absolute slack for capacity comparisons on float-valued resources.
EPS = 1e-9
DEFAULT_MAX_VIRTUAL_LINKS = 100


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


@dataclass(frozen=True)
class Mecsp:
    """An edge service provider and its four unit prices."""

    id: str
    gamma: float
    delta: float
    kappa: float
    sigma: float

    def __post_init__(self):
        for name in ("gamma", "delta", "kappa", "sigma"):
            _require(getattr(self, name) >= 0, f"mecsp {self.id}: {name} must be >= 0")


@dataclass(frozen=True)
class MeHost:
    id: str
    owner: str
    cpu_capacity: float
    mem_capacity: float

    def __post_init__(self):
        _require(self.cpu_capacity > 0, f"host {self.id}: cpu_capacity must be > 0")
        _require(self.mem_capacity > 0, f"host {self.id}: mem_capacity must be > 0")


@dataclass(frozen=True)
class HostLink:
    id: str
    endpoint_a: str
    endpoint_b: str
    bandwidth_capacity: float
    latency_ms: float
    max_virtual_links: int = DEFAULT_MAX_VIRTUAL_LINKS

    def __post_init__(self):
        _require(self.endpoint_a != self.endpoint_b, f"link {self.id}: endpoints must differ")
        _require(self.bandwidth_capacity > 0, f"link {self.id}: bandwidth_capacity must be > 0")
        _require(self.latency_ms >= 0, f"link {self.id}: latency_ms must be >= 0")
        _require(
            isinstance(self.max_virtual_links, int) and self.max_virtual_links >= 1,
            f"link {self.id}: max_virtual_links must be a positive integer",
        )

    @property
    def pair(self) -> frozenset[str]:
        return frozenset((self.endpoint_a, self.endpoint_b))


@dataclass(frozen=True)
class MeApp:
    id: str
    vendor: str
    cpu_demand: float
    mem_demand: float
    # optional budget for the hops into this app; None means only the chain budget applies
    max_latency_ms: float | None = None

    def __post_init__(self):
        _require(self.cpu_demand > 0, f"app {self.id}: cpu_demand must be > 0")
        _require(self.mem_demand > 0, f"app {self.id}: mem_demand must be > 0")

    def weighted_demand(self, weights: tuple[float, float] = (1.0, 1.0)) -> float:
        return weights[0] * self.cpu_demand + weights[1] * self.mem_demand


@dataclass(frozen=True)
class AppLink:
    src: str
    dst: str
    bandwidth_demand: float

    def __post_init__(self):
        _require(self.src != self.dst, f"applink {self.src}->{self.dst}: endpoints must differ")
        _require(self.bandwidth_demand >= 0, f"applink {self.src}->{self.dst}: negative bandwidth")


@dataclass(frozen=True)
class SvcChain:
    """A forwarding graph of apps with an end-to-end latency budget.

    ``apps`` is ordered; for the linear chains used throughout, ``links``
    connect consecutive apps in that order.
    """

    id: str
    apps: tuple[MeApp, ...]
    links: tuple[AppLink, ...]
    max_latency_ms: float
    requested_by: str = ""

    def __post_init__(self):
        object.__setattr__(self, "apps", tuple(self.apps))
        object.__setattr__(self, "links", tuple(self.links))
        _require(self.max_latency_ms >= 0, f"chain {self.id}: max_latency_ms must be >= 0")
        ids = [a.id for a in self.apps]
        if len(set(ids)) != len(ids):
            raise DuplicateId(f"chain {self.id}: duplicate app ids")
        known = set(ids)
        for link in self.links:
            if link.src not in known or link.dst not in known:
                raise DanglingReference(
                    f"chain {self.id}: applink {link.src}->{link.dst} leaves the chain"
                )

    @property
    def app_ids(self) -> list[str]:
        return [a.id for a in self.apps]

    def app(self, app_id: str) -> MeApp:
        for a in self.apps:
            if a.id == app_id:
                return a
        raise UnknownEntity(f"app {app_id} not in chain {self.id}")

    def links_of(self, app_id: str) -> list[AppLink]:
        return [l for l in self.links if app_id in (l.src, l.dst)]

    def demand(self, weights: tuple[float, float] = (1.0, 1.0)) -> float:
        return math.fsum(a.weighted_demand(weights) for a in self.apps)


@dataclass(frozen=True)
class UserDistribution:
    total_users: int
    shares: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "shares", dict(self.shares))
        _require(self.total_users > 0, "total_users must be > 0")
        for m, p in self.shares.items():
            _require(0.0 <= p <= 1.0, f"share of {m} must lie in [0, 1]")
        _require(math.fsum(self.shares.values()) <= 1.0 + EPS, "user shares sum above 1")

    def share(self, mecsp_id: str) -> float:
        return self.shares.get(mecsp_id, 0.0)


# Placement realizes the assignment indicator: app id -> host id.
Placement = dict[str, str]
# Identifies one AppLink's contribution on a HostLink.
LinkKey = tuple[str, str, str]


class Usage(NamedTuple):
    host_loads: dict[str, dict[str, tuple[float, float]]]
    link_loads: dict[str, dict[LinkKey, float]]
    unrouted: list[tuple[str, AppLink, str, str]]


@dataclass
class WorldState:
    mecsps: dict[str, Mecsp]
    hosts: dict[str, MeHost]
    host_links: dict[str, HostLink]
    chains: dict[str, SvcChain] = field(default_factory=dict)
    placement: dict[str, str] = field(default_factory=dict)
    # host id -> app id -> (cpu, mem); hosts without apps are absent
    host_loads: dict[str, dict[str, tuple[float, float]]] = field(default_factory=dict)
    # link id -> (chain id, src, dst) -> bandwidth; unused links are absent
    link_loads: dict[str, dict[LinkKey, float]] = field(default_factory=dict)
    weights: tuple[float, float] = (1.0, 1.0)

    def _evolve(self, **changes) -> WorldState:
        new = replace(self, **changes)
        if not {"mecsps", "hosts", "host_links"} & changes.keys():
            for key in ("_pairs", "_by_owner"):
                if key in self.__dict__:
                    new.__dict__[key] = self.__dict__[key]
        if "chains" not in changes and "_apps" in self.__dict__:
            new.__dict__["_apps"] = self.__dict__["_apps"]
        return new

    # -- derived indexes ---------------------------------------------------

    @property
    def _pair_index(self) -> dict[frozenset[str], HostLink]:
        if "_pairs" not in self.__dict__:
            self.__dict__["_pairs"] = {l.pair: l for l in self.host_links.values()}
        return self.__dict__["_pairs"]

    @property
    def _app_index(self) -> dict[str, tuple[SvcChain, MeApp]]:
        if "_apps" not in self.__dict__:
            self.__dict__["_apps"] = {
                a.id: (c, a) for c in self.chains.values() for a in c.apps
            }
        return self.__dict__["_apps"]

    def hosts_by_owner(self) -> dict[str, list[str]]:
        if "_by_owner" not in self.__dict__:
            groups: dict[str, list[str]] = {m: [] for m in self.mecsps}
            for h in sorted(self.hosts):
                groups.setdefault(self.hosts[h].owner, []).append(h)
            self.__dict__["_by_owner"] = groups
        return self.__dict__["_by_owner"]

    def link_between(self, host_a: str, host_b: str) -> HostLink | None:
        return self._pair_index.get(frozenset((host_a, host_b)))

    def app(self, app_id: str) -> MeApp:
        try:
            return self._app_index[app_id][1]
        except KeyError:
            raise UnknownEntity(f"app {app_id} is not part of any registered chain") from None

    def chain_of(self, app_id: str) -> SvcChain:
        try:
            return self._app_index[app_id][0]
        except KeyError:
            raise UnknownEntity(f"app {app_id} is not part of any registered chain") from None

    def host(self, host_id: str) -> MeHost:
        try:
            return self.hosts[host_id]
        except KeyError:
            raise UnknownEntity(f"host {host_id} does not exist") from None

    def owner_of(self, host_id: str) -> Mecsp:
        return self.mecsps[self.host(host_id).owner]

    # -- resource accounting ----------------------------------------------

    def used_cpu(self, host_id: str) -> float:
        return math.fsum(c for c, _ in self.host_loads.get(host_id, {}).values())

    def used_mem(self, host_id: str) -> float:
        return math.fsum(m for _, m in self.host_loads.get(host_id, {}).values())

    def remaining_cpu(self, host_id: str) -> float:
        return self.host(host_id).cpu_capacity - self.used_cpu(host_id)

    def remaining_mem(self, host_id: str) -> float:
        return self.host(host_id).mem_capacity - self.used_mem(host_id)

    def applink_count(self, link_id: str) -> int:
        return len(self.link_loads.get(link_id, {}))

    def used_bandwidth(self, link_id: str) -> float:
        return math.fsum(self.link_loads.get(link_id, {}).values())

    @property
    def link_usage(self) -> dict[str, tuple[int, float]]:
        return {
            lid: (self.applink_count(lid), self.used_bandwidth(lid)) for lid in self.host_links
        }

    def apps_on(self, host_id: str) -> list[str]:
        return sorted(self.host_loads.get(host_id, {}))


def world(
    mecsps: Iterable[Mecsp],
    hosts: Iterable[MeHost],
    host_links: Iterable[HostLink],
    weights: tuple[float, float] = (1.0, 1.0),
) -> WorldState:
    """Validate a substrate and return an empty world over it."""
    m_index: dict[str, Mecsp] = {}
    for m in mecsps:
        if m.id in m_index:
            raise DuplicateId(f"duplicate mecsp id {m.id}")
        m_index[m.id] = m
    h_index: dict[str, MeHost] = {}
    for h in hosts:
        if h.id in h_index:
            raise DuplicateId(f"duplicate host id {h.id}")
        if h.owner not in m_index:
            raise DanglingReference(f"host {h.id} references unknown mecsp {h.owner}")
        h_index[h.id] = h
    l_index: dict[str, HostLink] = {}
    pairs: set[frozenset[str]] = set()
    for l in host_links:
        if l.id in l_index:
            raise DuplicateId(f"duplicate host link id {l.id}")
        for end in (l.endpoint_a, l.endpoint_b):
            if end not in h_index:
                raise DanglingReference(f"link {l.id} references unknown host {end}")
        if l.pair in pairs:
            raise DuplicateId(f"link {l.id} duplicates an existing host pair")
        pairs.add(l.pair)
        l_index[l.id] = l
    _require(weights[0] >= 0 and weights[1] >= 0, "resource weights must be >= 0")
    return WorldState(m_index, h_index, l_index, weights=(float(weights[0]), float(weights[1])))


def build_world(scenario) -> WorldState:
    """Empty world over a scenario's substrate (chains stay requests)."""
    return world(scenario.mecsps, scenario.hosts, scenario.host_links, scenario.weights)


def add_chain(state: WorldState, chain: SvcChain) -> WorldState:
    if chain.id in state.chains:
        raise DuplicateId(f"chain {chain.id} already registered")
    for a in chain.apps:
        if a.id in state._app_index:
            raise DuplicateId(f"app id {a.id} already registered")
    return state._evolve(chains={**state.chains, chain.id: chain})


def replace_chain(state: WorldState, chain: SvcChain) -> WorldState:
    """Swap a registered chain for an extended definition with the same id."""
    old = state.chains.get(chain.id)
    if old is None:
        raise UnknownEntity(f"chain {chain.id} is not registered")
    placed = [a for a in old.app_ids if a in state.placement]
    if any(a not in chain.app_ids for a in placed):
        raise ValidationError(f"chain {chain.id}: cannot drop placed apps")
    others = {a for c in state.chains.values() if c.id != chain.id for a in c.app_ids}
    if others.intersection(chain.app_ids):
        raise DuplicateId(f"chain {chain.id}: app id collides with another chain")
    return state._evolve(chains={**state.chains, chain.id: chain})


def remove_chain(state: WorldState, chain_id: str) -> WorldState:
    chain = state.chains.get(chain_id)
    if chain is None:
        raise UnknownEntity(f"chain {chain_id} is not registered")
    if any(a in state.placement for a in chain.app_ids):
        raise ValidationError(f"chain {chain_id} still has placed apps")
    chains = dict(state.chains)
    del chains[chain_id]
    return state._evolve(chains=chains)


def _link_key(chain: SvcChain, link: AppLink) -> LinkKey:
    return (chain.id, link.src, link.dst)


def apply_assignment(state: WorldState, app_id: str, host_id: str) -> WorldState:
    """Place one app on one host, deducting cpu, memory and link resources."""
    app = state.app(app_id)
    chain = state.chain_of(app_id)
    host = state.host(host_id)
    if app_id in state.placement:
        raise AlreadyPlaced(f"app {app_id} already placed on {state.placement[app_id]}")

    loads = state.host_loads.get(host_id, {})
    cpu = math.fsum([*(c for c, _ in loads.values()), app.cpu_demand])
    mem = math.fsum([*(m for _, m in loads.values()), app.mem_demand])
    if cpu > host.cpu_capacity + EPS:
        raise CapacityExceeded("cpu", host_id, cpu - host.cpu_capacity)
    if mem > host.mem_capacity + EPS:
        raise CapacityExceeded("mem", host_id, mem - host.mem_capacity)

    additions: dict[str, dict[LinkKey, float]] = {}
    for link in chain.links_of(app_id):
        peer = link.dst if link.src == app_id else link.src
        peer_host = state.placement.get(peer)
        if peer_host is None or peer_host == host_id:
            continue
        hl = state.link_between(host_id, peer_host)
        if hl is None:
            raise NoRoute(host_id, peer_host)
        additions.setdefault(hl.id, {})[_link_key(chain, link)] = link.bandwidth_demand

    link_loads = dict(state.link_loads)
    for lid, add in additions.items():
        hl = state.host_links[lid]
        merged = {**state.link_loads.get(lid, {}), **add}
        if len(merged) > hl.max_virtual_links:
            raise CapacityExceeded("virtual_links", lid, len(merged) - hl.max_virtual_links)
        bw = math.fsum(merged.values())
        if bw > hl.bandwidth_capacity + EPS:
            raise CapacityExceeded("bandwidth", lid, bw - hl.bandwidth_capacity)
        link_loads[lid] = merged

    host_loads = dict(state.host_loads)
    host_loads[host_id] = {**loads, app_id: (app.cpu_demand, app.mem_demand)}
    return state._evolve(
        placement={**state.placement, app_id: host_id},
        host_loads=host_loads,
        link_loads=link_loads,
    )


def remove_assignment(state: WorldState, app_id: str) -> WorldState:
    """Exact inverse of :func:`apply_assignment`."""
    host_id = state.placement.get(app_id)
    if host_id is None:
        raise NotPlaced(f"app {app_id} is not placed")
    chain = state.chain_of(app_id)

    placement = dict(state.placement)
    del placement[app_id]
    host_loads = dict(state.host_loads)
    remaining = {a: v for a, v in host_loads[host_id].items() if a != app_id}
    if remaining:
        host_loads[host_id] = remaining
    else:
        del host_loads[host_id]

    link_loads = dict(state.link_loads)
    for link in chain.links_of(app_id):
        peer = link.dst if link.src == app_id else link.src
        peer_host = state.placement.get(peer)
        if peer_host is None or peer_host == host_id:
            continue
        lid = state.link_between(host_id, peer_host).id
        left = {k: v for k, v in link_loads[lid].items() if k != _link_key(chain, link)}
        if left:
            link_loads[lid] = left
        else:
            del link_loads[lid]
    return state._evolve(placement=placement, host_loads=host_loads, link_loads=link_loads)


def recompute_usage(state: WorldState, placement: Mapping[str, str] | None = None) -> Usage:
    """Usage implied by a placement, built from scratch without any guards."""
    placement = state.placement if placement is None else placement
    host_loads: dict[str, dict[str, tuple[float, float]]] = {}
    link_loads: dict[str, dict[LinkKey, float]] = {}
    unrouted = []
    for chain in state.chains.values():
        for app in chain.apps:
            h = placement.get(app.id)
            if h is not None:
                host_loads.setdefault(h, {})[app.id] = (app.cpu_demand, app.mem_demand)
        for link in chain.links:
            hi, hj = placement.get(link.src), placement.get(link.dst)
            if hi is None or hj is None or hi == hj:
                continue
            hl = state.link_between(hi, hj)
            if hl is None:
                unrouted.append((chain.id, link, hi, hj))
                continue
            link_loads.setdefault(hl.id, {})[_link_key(chain, link)] = link.bandwidth_demand
    return Usage(host_loads, link_loads, unrouted)


def with_placement(state: WorldState, placement: Mapping[str, str]) -> WorldState:
    """State carrying ``placement`` verbatim; bounds are NOT enforced."""
    for app_id, host_id in placement.items():
        state.app(app_id)
        state.host(host_id)
    usage = recompute_usage(state, placement)
    return state._evolve(
        placement=dict(placement), host_loads=usage.host_loads, link_loads=usage.link_loads
    )
