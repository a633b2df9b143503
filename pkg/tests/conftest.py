from __future__ import annotations

import itertools
import re

import pytest

from edgechain import (
    AppLink,
    HostLink,
    MeApp,
    Mecsp,
    MeHost,
    SvcChain,
    UserDistribution,
    bundled_scenario,
    load_scenario,
    world,
)


@pytest.fixture(scope="session")
def table3():
    return load_scenario(bundled_scenario())


@pytest.fixture
def t3_world(table3):
    from edgechain import build_world

    return build_world(table3)


def linear_chain(cid, n, cpu=2.0, mem=2048.0, bw=30.0, max_latency=50.0, prefix=None):
    prefix = prefix or cid
    apps = [MeApp(f"{prefix}.v{i + 1}", "a1", cpu, mem) for i in range(n)]
    links = [AppLink(apps[i].id, apps[i + 1].id, bw) for i in range(n - 1)]
    return SvcChain(cid, tuple(apps), tuple(links), max_latency)


def mesh_world(owners, cpu=64.0, mem=65536.0, bw=10000.0, latency=15.0, mecsps=None, max_vl=100):
    """Hosts h1..hn owned by ``owners[i]``, fully meshed."""
    if mecsps is None:
        mecsps = [
            Mecsp("m1", 1.0, 0.2, 1.0, 0.2),
            Mecsp("m2", 0.8, 0.5, 0.8, 0.5),
            Mecsp("m3", 1.2, 0.3, 1.2, 0.3),
        ]
    hosts = [MeHost(f"h{i + 1}", o, cpu, mem) for i, o in enumerate(owners)]
    links = [
        HostLink(f"{a.id}-{b.id}", a.id, b.id, bw, latency, max_vl)
        for i, a in enumerate(hosts)
        for b in hosts[i + 1:]
    ]
    return world(mecsps, hosts, links)


T3_DIST = UserDistribution(100, {"m1": 0.5, "m2": 0.25, "m3": 0.25})


# -- independent scalar reference ------------------------------------------------
#
# Written straight from the pricing rules with plain floats and loops; it
# shares no code with edgechain.cost, edgechain.feasibility or edgechain.oracle.


def _pair(state, a, b):
    for l in state.host_links.values():
        if {l.endpoint_a, l.endpoint_b} == {a, b}:
            return l
    return None


def ref_usage(state, chain, placement):
    """Per-host (cpu, mem) and per-link (count, bw) after adding ``placement``."""
    cpu = {h: 0.0 for h in state.hosts}
    mem = {h: 0.0 for h in state.hosts}
    count = {l: 0 for l in state.host_links}
    bw = {l: 0.0 for l in state.host_links}
    for h, loads in state.host_loads.items():
        for c, m in loads.values():
            cpu[h] += c
            mem[h] += m
    for lid, loads in state.link_loads.items():
        count[lid] += len(loads)
        bw[lid] += sum(loads.values())
    routed = True
    for app in chain.apps:
        cpu[placement[app.id]] += app.cpu_demand
        mem[placement[app.id]] += app.mem_demand
    for link in chain.links:
        a, b = placement[link.src], placement[link.dst]
        if a == b:
            continue
        hl = _pair(state, a, b)
        if hl is None:
            routed = False
            continue
        count[hl.id] += 1
        bw[hl.id] += link.bandwidth_demand
    return cpu, mem, count, bw, routed


def ref_feasible(state, chain, placement, eps=1e-9):
    cpu, mem, count, bw, routed = ref_usage(state, chain, placement)
    if not routed:
        return False
    for h, host in state.hosts.items():
        if cpu[h] > host.cpu_capacity + eps or mem[h] > host.mem_capacity + eps:
            return False
    for lid, hl in state.host_links.items():
        if count[lid] > hl.max_virtual_links or bw[lid] > hl.bandwidth_capacity + eps:
            return False
    latency = 0.0
    for link in chain.links:
        a, b = placement[link.src], placement[link.dst]
        if a != b:
            latency += _pair(state, a, b).latency_ms
    if latency > chain.max_latency_ms + eps:
        return False
    order = chain.app_ids
    for app in chain.apps:
        if app.max_latency_ms is None:
            continue
        hop = 0.0
        for link in chain.links:
            if app.id not in (link.src, link.dst):
                continue
            peer = link.dst if link.src == app.id else link.src
            if order.index(peer) > order.index(app.id):
                continue
            a, b = placement[app.id], placement[peer]
            if a != b:
                hop += _pair(state, a, b).latency_ms
        if hop > app.max_latency_ms + eps:
            return False
    return True


def ref_cost(state, chain, placement, dist):
    """Host plus link cost of ``placement`` with link prices read after adding it."""
    w_cpu, w_mem = state.weights
    n = dist.total_users
    total = 0.0
    for app in chain.apps:
        m = state.mecsps[state.hosts[placement[app.id]].owner]
        p = dist.shares.get(m.id, 0.0)
        total += n * (w_cpu * app.cpu_demand + w_mem * app.mem_demand) * (m.gamma + (1 - p) * m.delta)
    _, _, count, bw, _ = ref_usage(state, chain, placement)
    for link in chain.links:
        a, b = placement[link.src], placement[link.dst]
        if a == b:
            continue
        hl = _pair(state, a, b)
        zeta = (count[hl.id] / hl.max_virtual_links) * (bw[hl.id] / hl.bandwidth_capacity)
        mi = state.mecsps[state.hosts[a].owner]
        mj = state.mecsps[state.hosts[b].owner]
        if mi.id == mj.id:
            f = dist.shares.get(mi.id, 0.0)
        else:
            f = dist.shares.get(mi.id, 0.0) + dist.shares.get(mj.id, 0.0)
        f = min(1.0, max(0.0, f))
        kappa = (mi.kappa + mj.kappa) / 2
        sigma = (mi.sigma + mj.sigma) / 2
        total += n * zeta * (f * kappa + (1 - f) * (kappa + sigma))
    return total


def ref_brute_force(state, chain, dist):
    """(best cost or None, feasible count) by plain enumeration."""
    hosts = sorted(state.hosts)
    best, feasible = None, 0
    for combo in itertools.product(hosts, repeat=len(chain.apps)):
        placement = dict(zip(chain.app_ids, combo))
        if not ref_feasible(state, chain, placement):
            continue
        feasible += 1
        c = ref_cost(state, chain, placement, dist)
        if best is None or c < best:
            best = c
    return best, feasible


# -- acceptance summary ------------------------------------------------------------


_CRITERIA: dict[int, list[bool]] = {}
_NOTES: dict[int, list[str]] = {}
_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA.setdefault(int(m.group(1)), []).append(report.outcome == "passed")
        for name, value in report.user_properties:
            _NOTES.setdefault(int(m.group(1)), []).append(f"{name}: {value}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        verdict = "PASS" if all(_CRITERIA[n]) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict} ({len(_CRITERIA[n])} checks)")
        for note in _NOTES.get(n, []):
            terminalreporter.write_line(f"    {note}")
