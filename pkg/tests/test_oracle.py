from __future__ import annotations

import math
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgechain import (
    Mecsp,
    PlacementRequest,
    SvcChain,
    UserDistribution,
    add_chain,
    apply_assignment,
    host_app_cost,
    place_chain,
    solve_exact,
)
from edgechain.errors import TooLarge

from conftest import T3_DIST, linear_chain, mesh_world, ref_brute_force

T3_OWNERS = ["m1"] * 3 + ["m2"] * 3 + ["m3"] * 3


def t3_prices(delta_m1):
    return [
        Mecsp("m1", 1.0, delta_m1, 1.0, 0.2),
        Mecsp("m2", 0.8, 0.5, 0.8, 0.5),
        Mecsp("m3", 1.2, 0.3, 1.2, 0.3),
    ]


def test_one_app_one_host():
    w = mesh_world(["m1"])
    chain = linear_chain("s", 1)
    r = solve_exact(chain, w, T3_DIST)
    assert r.best == {"s.v1": "h1"}
    assert r.best_cost.total == host_app_cost(chain.apps[0], w.hosts["h1"], w.mecsps["m1"], T3_DIST)
    assert (r.evaluated, r.feasible_count) == (1, 1)


@pytest.mark.parametrize("delta", [0.4, 0.5, 0.6])
def test_table3_optimum_moves_to_m2(delta):
    w = mesh_world(T3_OWNERS, mecsps=t3_prices(delta))
    chain = linear_chain("s", 5)
    started = time.perf_counter()
    r = solve_exact(chain, w, T3_DIST)
    assert time.perf_counter() - started < 10
    assert r.evaluated == 9**5
    assert r.best == {a: "h4" for a in chain.app_ids}
    assert r.best_cost.total == pytest.approx(5 * 100 * 2050 * 1.175)


@pytest.mark.parametrize("delta", [0.1, 0.2, 0.3])
def test_table3_optimum_stays_on_m1(delta):
    w = mesh_world(T3_OWNERS, mecsps=t3_prices(delta))
    r = solve_exact(linear_chain("s", 5), w, T3_DIST)
    assert set(r.best.values()) == {"h1"}


def test_zero_latency_and_oversized_chain():
    w = mesh_world(["m1", "m1"], cpu=4)
    chain = linear_chain("s", 3, cpu=2, max_latency=0)
    r = solve_exact(chain, w, T3_DIST)
    assert r.best is None and r.best_cost is None
    assert (r.evaluated, r.feasible_count) == (8, 0)


def test_limit_is_enforced():
    with pytest.raises(TooLarge):
        solve_exact(linear_chain("s", 5), mesh_world(T3_OWNERS), T3_DIST, limit=59048)


def test_empty_chain_and_empty_substrate():
    assert solve_exact(SvcChain("e", (), (), 1), mesh_world(["m1"]), T3_DIST).feasible_count == 1
    w = mesh_world([])
    r = solve_exact(linear_chain("s", 2), w, T3_DIST)
    assert r.best is None and r.feasible_count == 0


def test_oracle_respects_existing_usage():
    w = mesh_world(["m1", "m2"], cpu=4)
    w = add_chain(w, linear_chain("pre", 2, cpu=2, bw=0, prefix="p"))
    w = apply_assignment(apply_assignment(w, "p.v1", "h1"), "p.v2", "h1")
    r = solve_exact(linear_chain("s", 1), w, T3_DIST)
    assert r.best == {"s.v1": "h2"}
    assert r.feasible_count == 1


def test_tie_break_is_smallest_assignment_vector():
    w = mesh_world(["m1", "m1", "m1"])
    r = solve_exact(linear_chain("s", 2), w, T3_DIST)
    assert r.best == {"s.v1": "h1", "s.v2": "h1"}


@st.composite
def instances(draw):
    owners = draw(st.lists(st.sampled_from(["m1", "m2", "m3"]), min_size=1, max_size=4))
    n_apps = draw(st.integers(1, 4))
    cpu = draw(st.sampled_from([2.0, 3.0, 4.0, 100.0]))
    bw = draw(st.sampled_from([20.0, 45.0, 1000.0]))
    max_vl = draw(st.integers(1, 3))
    latency = draw(st.sampled_from([0.0, 15.0, 30.0, 50.0]))
    prices = draw(st.lists(st.floats(0, 2), min_size=4, max_size=4))
    p1 = draw(st.floats(0, 1))
    pre = draw(st.lists(st.integers(0, len(owners) - 1), max_size=2))
    return owners, n_apps, cpu, bw, max_vl, latency, prices, p1, pre


@settings(max_examples=200, deadline=None)
@given(instances())
def test_oracle_matches_plain_enumeration(case):
    owners, n_apps, cpu, bw, max_vl, latency, prices, p1, pre = case
    mecsps = [Mecsp("m1", *prices), Mecsp("m2", 0.8, 0.5, 0.8, 0.5), Mecsp("m3", 1.2, 0.3, 1.2, 0.3)]
    w = mesh_world(owners, cpu=cpu, mem=8192, bw=bw, max_vl=max_vl, latency=15.0, mecsps=mecsps)
    if pre:
        # some background traffic so link prices start above zero
        pc = linear_chain("pre", len(pre), cpu=0.5, mem=1, bw=15, max_latency=1e9, prefix="p")
        w = add_chain(w, pc)
        for app, h in zip(pc.app_ids, pre):
            w = apply_assignment(w, app, f"h{h + 1}")
    chain = linear_chain("s", n_apps, cpu=1.5, mem=1024, bw=20, max_latency=latency)
    dist = UserDistribution(40, {"m1": p1, "m2": 1 - p1})
    r = solve_exact(chain, w, dist)
    best, feasible = ref_brute_force(add_chain(w, chain), chain, dist)
    assert r.feasible_count == feasible
    assert r.evaluated == len(owners) ** n_apps
    if best is None:
        assert r.best is None
    else:
        assert math.isclose(r.best_cost.total, best, rel_tol=1e-9, abs_tol=1e-9)
        decision, _ = place_chain(PlacementRequest(chain, dist), w)
        assert decision.placed
        assert decision.cost.total >= r.best_cost.total
