"""Exhaustive optimum of the chain placement problem.

Every mapping of the chain's apps onto hosts is enumerated. Feasibility and
cost are evaluated in vectorized batches directly from the placement (usage
is rebuilt per candidate, never read from the incremental bookkeeping). The
few candidates within float noise of the batch minimum are then re-scored on
scratch states through the regular cost and constraint functions, so the
reported optimum is exactly comparable with heuristic costs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostBreakdown, chain_cost, effective_unit_price, own_user_fraction, pair_pricing
from .errors import AlreadyPlaced, TooLarge
from .feasibility import check_placement
from .model import EPS, SvcChain, UserDistribution, WorldState, add_chain, apply_assignment

DEFAULT_LIMIT = 10**7
_CHUNK = 1 << 16
# near-minimal candidates re-scored exactly; more only arise with massive cost ties
_RESCORE = 256
_REL_BAND = 1e-9


@dataclass(frozen=True)
class OracleResult:
    best: dict[str, str] | None
    best_cost: CostBreakdown | None
    evaluated: int
    feasible_count: int

    @property
    def feasible(self) -> bool:
        return self.best is not None


def solve_exact(
    chain: SvcChain,
    state: WorldState,
    dist: UserDistribution,
    limit: int = DEFAULT_LIMIT,
) -> OracleResult:
    """Minimum-cost feasible placement of ``chain`` given the usage already in ``state``.

    Ties are broken by the assignment vector in chain app order over host ids
    sorted ascending.
    """
    base = state if chain.id in state.chains else add_chain(state, chain)
    for a in chain.app_ids:
        if a in base.placement:
            raise AlreadyPlaced(f"app {a} of chain {chain.id} is already placed")
    hosts = sorted(base.hosts)
    n_hosts, n_apps = len(hosts), len(chain.apps)
    total = n_hosts**n_apps
    if total > limit:
        raise TooLarge(f"{n_hosts}^{n_apps} = {total} candidates exceeds limit {limit}")
    if n_apps == 0:
        return OracleResult({}, CostBreakdown(), 1, 1)
    if n_hosts == 0:
        return OracleResult(None, None, 0, 0)

    tables = _Tables(chain, base, dist, hosts)
    feasible_count = 0
    band_codes = np.empty(0, dtype=np.int64)
    band_costs = np.empty(0)
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        ok, costs = tables.evaluate(codes)
        feasible_count += int(ok.sum())
        band_codes = np.concatenate([band_codes, codes[ok]])
        band_costs = np.concatenate([band_costs, costs[ok]])
        if band_costs.size:
            lo = band_costs.min()
            keep = band_costs <= lo + _REL_BAND * max(1.0, abs(lo))
            band_codes, band_costs = band_codes[keep], band_costs[keep]
            order = np.lexsort((band_codes, band_costs))[:_RESCORE]
            band_codes, band_costs = band_codes[order], band_costs[order]

    if feasible_count == 0:
        return OracleResult(None, None, total, 0)

    best = None
    for code in sorted(int(c) for c in band_codes):
        assignment = tables.decode(code)
        scratch = base
        for app_id in chain.app_ids:
            scratch = apply_assignment(scratch, app_id, assignment[app_id])
        if check_placement(scratch, [chain], dist):
            raise RuntimeError(f"oracle batch judged an infeasible candidate feasible: {assignment}")
        cost = chain_cost(chain, assignment, scratch, dist)
        if best is None or cost.total < best[1].total:
            best = (assignment, cost)
    return OracleResult(best[0], best[1], total, feasible_count)


class _Tables:
    """Per-instance arrays for batch evaluation."""

    def __init__(self, chain: SvcChain, state: WorldState, dist: UserDistribution, hosts):
        self.chain = chain
        self.hosts = hosts
        self.n_hosts = len(hosts)
        self.n_apps = len(chain.apps)
        h_pos = {h: i for i, h in enumerate(hosts)}
        a_pos = {a: j for j, a in enumerate(chain.app_ids)}

        self.cap_cpu = np.array([state.hosts[h].cpu_capacity for h in hosts], dtype=float)
        self.cap_mem = np.array([state.hosts[h].mem_capacity for h in hosts], dtype=float)
        self.base_cpu = np.array([state.used_cpu(h) for h in hosts])
        self.base_mem = np.array([state.used_mem(h) for h in hosts])
        self.app_cpu = [a.cpu_demand for a in chain.apps]
        self.app_mem = [a.mem_demand for a in chain.apps]

        link_ids = sorted(state.host_links)
        n_links = len(link_ids)
        self.link_index = np.full((self.n_hosts, self.n_hosts), -1, dtype=np.int64)
        for e, lid in enumerate(link_ids):
            hl = state.host_links[lid]
            i, j = h_pos[hl.endpoint_a], h_pos[hl.endpoint_b]
            self.link_index[i, j] = self.link_index[j, i] = e
        self.n_links = n_links
        self.latency = np.array([state.host_links[l].latency_ms for l in link_ids], dtype=float)
        self.bandwidth = np.array(
            [state.host_links[l].bandwidth_capacity for l in link_ids], dtype=float
        )
        self.max_links = np.array(
            [state.host_links[l].max_virtual_links for l in link_ids], dtype=float
        )
        self.base_count = np.array([state.applink_count(l) for l in link_ids], dtype=float)
        self.base_bw = np.array([state.used_bandwidth(l) for l in link_ids])

        owners = [state.mecsps[state.hosts[h].owner] for h in hosts]
        unit = np.array([effective_unit_price(m, dist) for m in owners])
        demand = np.array([a.weighted_demand(state.weights) for a in chain.apps])
        self.host_cost = dist.total_users * demand[:, None] * unit[None, :]
        # per host pair: n_s * (F * kappa + (1 - F) * (kappa + sigma))
        self.pair_coef = np.zeros((self.n_hosts, self.n_hosts))
        for i, mi in enumerate(owners):
            for j, mj in enumerate(owners):
                p = pair_pricing(mi, mj)
                f = own_user_fraction(mi, mj, dist)
                self.pair_coef[i, j] = dist.total_users * (
                    f * p.kappa_pair + (1.0 - f) * (p.kappa_pair + p.sigma_pair)
                )

        self.app_links = [(a_pos[l.src], a_pos[l.dst], l.bandwidth_demand) for l in chain.links]
        self.max_latency = chain.max_latency_ms
        # app position -> indexes of app links joining it to earlier apps
        self.budgets = []
        for j, app in enumerate(chain.apps):
            if app.max_latency_ms is None:
                continue
            incoming = [
                q for q, (s, d, _) in enumerate(self.app_links)
                if (s == j and d < j) or (d == j and s < j)
            ]
            self.budgets.append((app.max_latency_ms, incoming))

    def digits(self, codes: np.ndarray) -> np.ndarray:
        out = np.empty((codes.size, self.n_apps), dtype=np.int64)
        rest = codes.copy()
        for j in range(self.n_apps - 1, -1, -1):
            out[:, j] = rest % self.n_hosts
            rest //= self.n_hosts
        return out

    def decode(self, code: int) -> dict[str, str]:
        row = self.digits(np.array([code], dtype=np.int64))[0]
        return {a: self.hosts[int(h)] for a, h in zip(self.chain.app_ids, row)}

    def evaluate(self, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        assign = self.digits(codes)
        n = codes.size
        rows = np.arange(n)

        cpu = np.tile(self.base_cpu, (n, 1))
        mem = np.tile(self.base_mem, (n, 1))
        for j in range(self.n_apps):
            cpu[rows, assign[:, j]] += self.app_cpu[j]
            mem[rows, assign[:, j]] += self.app_mem[j]
        ok = np.all(cpu <= self.cap_cpu + EPS, axis=1) & np.all(mem <= self.cap_mem + EPS, axis=1)

        count = np.tile(self.base_count, (n, 1))
        bw = np.tile(self.base_bw, (n, 1))
        latency = np.zeros(n)
        hop_latency = []
        used = []
        for src, dst, demand in self.app_links:
            hi, hj = assign[:, src], assign[:, dst]
            li = self.link_index[hi, hj]
            cross = hi != hj
            ok &= ~(cross & (li < 0))
            carries = cross & (li >= 0)
            safe = np.where(carries, li, 0)
            count[rows[carries], li[carries]] += 1
            bw[rows[carries], li[carries]] += demand
            hop = np.where(carries, self.latency[safe], 0.0) if self.n_links else np.zeros(n)
            latency += hop
            hop_latency.append(hop)
            used.append((carries, safe, hi, hj))
        if self.n_links:
            ok &= np.all(count <= self.max_links, axis=1)
            ok &= np.all(bw <= self.bandwidth + EPS, axis=1)
        ok &= latency <= self.max_latency + EPS
        for budget, incoming in self.budgets:
            hop = np.zeros(n)
            for q in incoming:
                hop += hop_latency[q]
            ok &= hop <= budget + EPS

        cost = np.zeros(n)
        for j in range(self.n_apps):
            cost += self.host_cost[j, assign[:, j]]
        for carries, safe, hi, hj in used:
            if not self.n_links:
                break
            zeta = (count[rows, safe] / self.max_links[safe]) * (bw[rows, safe] / self.bandwidth[safe])
            cost += np.where(carries, zeta * self.pair_coef[hi, hj], 0.0)
        return ok, cost
