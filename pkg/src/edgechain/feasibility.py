"""Constraint checks for committed and candidate placements."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from enum import Enum

from .errors import Unplaced
from .model import EPS, SvcChain, UserDistribution, WorldState, add_chain, recompute_usage


class ViolationKind(str, Enum):
    BANDWIDTH = "bandwidth"
    CPU = "cpu"
    MEMORY = "memory"
    LATENCY = "latency"
    NO_ROUTE = "no_route"
    VIRTUAL_LINKS = "virtual_links"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    subject: str
    margin: float


def _over(value: float, bound: float) -> float | None:
    return value - bound if value > bound + EPS else None


def incoming_latency(
    chain: SvcChain, app_id: str, placement: Mapping[str, str], state: WorldState
) -> float:
    """Latency of the hops joining ``app_id`` to apps placed before it in chain order."""
    order = {a: i for i, a in enumerate(chain.app_ids)}
    total = 0.0
    for link in chain.links_of(app_id):
        peer = link.dst if link.src == app_id else link.src
        if order[peer] > order[app_id] or peer not in placement:
            continue
        if placement[peer] == placement[app_id]:
            continue
        hl = state.link_between(placement[peer], placement[app_id])
        if hl is not None:
            total += hl.latency_ms
    return total


def check_placement(
    state: WorldState, chains: Iterable[SvcChain], dist: UserDistribution | None = None
) -> list[Violation]:
    """All capacity, bandwidth, routing and latency breaches of a placement.

    Usage is rebuilt from the placement rather than read from the state's
    incremental accounting.
    """
    chains = list(chains)
    for chain in chains:
        if chain.id not in state.chains:
            state = add_chain(state, chain)
        missing = [a for a in chain.app_ids if a not in state.placement]
        if missing:
            raise Unplaced(f"chain {chain.id}: unplaced apps {', '.join(missing)}")

    usage = recompute_usage(state)
    out: list[Violation] = []
    for h in sorted(usage.host_loads):
        host = state.hosts[h]
        loads = usage.host_loads[h].values()
        if (m := _over(math.fsum(c for c, _ in loads), host.cpu_capacity)) is not None:
            out.append(Violation(ViolationKind.CPU, h, m))
        if (m := _over(math.fsum(x for _, x in loads), host.mem_capacity)) is not None:
            out.append(Violation(ViolationKind.MEMORY, h, m))
    for lid in sorted(usage.link_loads):
        hl = state.host_links[lid]
        carried = usage.link_loads[lid]
        if len(carried) > hl.max_virtual_links:
            out.append(
                Violation(ViolationKind.VIRTUAL_LINKS, lid, len(carried) - hl.max_virtual_links)
            )
        if (m := _over(math.fsum(carried.values()), hl.bandwidth_capacity)) is not None:
            out.append(Violation(ViolationKind.BANDWIDTH, lid, m))
    for chain_id, link, hi, hj in usage.unrouted:
        out.append(Violation(ViolationKind.NO_ROUTE, f"{chain_id}:{link.src}->{link.dst}", 1))

    for chain in chains:
        latency = 0.0
        for link in chain.links:
            hi, hj = state.placement[link.src], state.placement[link.dst]
            if hi != hj and (hl := state.link_between(hi, hj)) is not None:
                latency += hl.latency_ms
        if (m := _over(latency, chain.max_latency_ms)) is not None:
            out.append(Violation(ViolationKind.LATENCY, chain.id, m))
        for app in chain.apps:
            if app.max_latency_ms is None:
                continue
            hop = incoming_latency(chain, app.id, state.placement, state)
            if (m := _over(hop, app.max_latency_ms)) is not None:
                out.append(Violation(ViolationKind.LATENCY, app.id, m))
    return out


def check_partial(
    state: WorldState,
    chain: SvcChain,
    placed_prefix: Mapping[str, str],
    candidate: tuple[str, str],
    dist: UserDistribution | None = None,
) -> list[Violation]:
    """Would placing ``candidate`` next, after ``placed_prefix``, break a bound?

    ``state`` is expected to already carry the prefix assignments. Latency is
    the realized latency among placed apps plus the candidate's own hops; hops
    towards still-unplaced apps are not anticipated.
    """
    app_id, host_id = candidate
    app = chain.app(app_id)
    host = state.hosts[host_id]
    out: list[Violation] = []

    loads = state.host_loads.get(host_id, {}).values()
    cpu = math.fsum([*(c for c, _ in loads), app.cpu_demand])
    mem = math.fsum([*(x for _, x in loads), app.mem_demand])
    if (m := _over(cpu, host.cpu_capacity)) is not None:
        out.append(Violation(ViolationKind.CPU, host_id, m))
    if (m := _over(mem, host.mem_capacity)) is not None:
        out.append(Violation(ViolationKind.MEMORY, host_id, m))

    added: dict[str, list[float]] = {}
    hop_latency = 0.0
    for link in chain.links_of(app_id):
        peer = link.dst if link.src == app_id else link.src
        peer_host = placed_prefix.get(peer)
        if peer_host is None or peer_host == host_id:
            continue
        hl = state.link_between(host_id, peer_host)
        if hl is None:
            out.append(Violation(ViolationKind.NO_ROUTE, f"{host_id}-{peer_host}", 1))
            continue
        added.setdefault(hl.id, []).append(link.bandwidth_demand)
        hop_latency += hl.latency_ms
    for lid, demands in sorted(added.items()):
        hl = state.host_links[lid]
        count = state.applink_count(lid) + len(demands)
        if count > hl.max_virtual_links:
            out.append(Violation(ViolationKind.VIRTUAL_LINKS, lid, count - hl.max_virtual_links))
        carried = list(state.link_loads.get(lid, {}).values())
        if (m := _over(math.fsum(carried + demands), hl.bandwidth_capacity)) is not None:
            out.append(Violation(ViolationKind.BANDWIDTH, lid, m))

    prefix_latency = 0.0
    for link in chain.links:
        hi, hj = placed_prefix.get(link.src), placed_prefix.get(link.dst)
        if hi is None or hj is None or hi == hj:
            continue
        if (hl := state.link_between(hi, hj)) is not None:
            prefix_latency += hl.latency_ms
    if (m := _over(prefix_latency + hop_latency, chain.max_latency_ms)) is not None:
        out.append(Violation(ViolationKind.LATENCY, chain.id, m))
    if app.max_latency_ms is not None:
        if (m := _over(hop_latency, app.max_latency_ms)) is not None:
            out.append(Violation(ViolationKind.LATENCY, app_id, m))
    return out
