from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgechain import (
    Outcome,
    PlacementOptions,
    PlacementRequest,
    SvcChain,
    UserDistribution,
    add_chain,
    apply_assignment,
    check_placement,
    place_all,
    place_app,
    place_chain,
    solve_exact,
)
from edgechain.cost import CostBreakdown
from edgechain.placement import processing_order, rank_hosts

from conftest import T3_DIST, linear_chain, mesh_world, ref_brute_force

T3_OWNERS = ["m1"] * 3 + ["m2"] * 3 + ["m3"] * 3


def t3(**kw):
    return mesh_world(T3_OWNERS, **kw)


def test_first_app_ranks_cheapest_provider_first():
    w = add_chain(t3(), linear_chain("s", 5))
    ranked = rank_hosts("s.v1", w.chains["s"], {}, w, T3_DIST)
    assert ranked[:3] == ["h1", "h2", "h3"]
    assert set(ranked[3:6]) == {"h4", "h5", "h6"}


def test_predecessor_host_ranks_first():
    w = add_chain(t3(), linear_chain("s", 5))
    w = apply_assignment(w, "s.v1", "h2")
    ranked = rank_hosts("s.v2", w.chains["s"], {"s.v1": "h2"}, w, T3_DIST)
    assert ranked[0] == "h2"
    assert ranked[1:3] == ["h1", "h3"]


def test_share_mode_ranks_by_share_alone():
    w = add_chain(t3(), linear_chain("s", 5))
    dist = UserDistribution(100, {"m1": 0.2, "m2": 0.3, "m3": 0.5})
    ranked = rank_hosts("s.v1", w.chains["s"], {}, w, dist, rank_mode="share")
    assert ranked[:3] == ["h7", "h8", "h9"]
    ranked = rank_hosts("s.v1", w.chains["s"], {}, w, dist)
    # unit prices: m1 1.16, m2 1.15, m3 1.35
    assert ranked[:3] == ["h4", "h5", "h6"]


def test_single_host_ranking():
    w = add_chain(mesh_world(["m2"]), linear_chain("s", 2))
    assert rank_hosts("s.v1", w.chains["s"], {}, w, T3_DIST) == ["h1"]


def test_place_app_on_first_m1_host():
    w = add_chain(t3(), linear_chain("s", 5))
    host, w2 = place_app("s.v1", w.chains["s"], {}, w, T3_DIST)
    assert host == "h1"
    assert w2.placement == {"s.v1": "h1"}


def test_place_app_without_headroom():
    w = mesh_world(["m1", "m1"], cpu=2)
    w = add_chain(w, linear_chain("fill", 2, bw=0, prefix="f"))
    w = apply_assignment(apply_assignment(w, "f.v1", "h1"), "f.v2", "h2")
    w = add_chain(w, linear_chain("s", 1))
    host, w2 = place_app("s.v1", w.chains["s"], {}, w, T3_DIST)
    assert host is None and w2 is w


def test_place_app_tight_latency_and_full_predecessor_host():
    w = mesh_world(["m1", "m1", "m2"], cpu=2)
    w = add_chain(w, linear_chain("s", 2, max_latency=10))
    w = apply_assignment(w, "s.v1", "h1")
    host, _ = place_app("s.v2", w.chains["s"], {"s.v1": "h1"}, w, T3_DIST)
    assert host is None


def test_table3_chain_colocates_on_m1():
    w = t3()
    chain = linear_chain("s", 5)
    decision, after = place_chain(PlacementRequest(chain, T3_DIST), w)
    assert decision.outcome is Outcome.PLACED
    assert set(decision.assignments.values()) == {"h1"}
    assert decision.cost.link_cost == 0
    assert decision.cost.latency_ms == 0
    assert decision.cost.host_cost == pytest.approx(1127500)
    assert after.placement == decision.assignments
    exact = solve_exact(chain, w, T3_DIST)
    assert exact.best_cost.total == decision.cost.total


def test_empty_chain_is_placed_for_free():
    decision, _ = place_chain(PlacementRequest(SvcChain("e", (), (), 10), T3_DIST), t3())
    assert decision.placed
    assert decision.assignments == {}
    assert decision.cost == CostBreakdown()


def test_large_apps_need_too_many_hops():
    w = mesh_world(["m1"] * 5)
    chain = linear_chain("big", 5, cpu=40, mem=1024)
    decision, after = place_chain(PlacementRequest(chain, T3_DIST), w)
    assert decision.outcome is Outcome.INFEASIBLE
    assert after is w
    assert solve_exact(chain, w, T3_DIST).feasible_count == 0


def test_large_apps_spread_when_latency_allows():
    w = mesh_world(["m1"] * 5)
    chain = linear_chain("big", 5, cpu=40, mem=1024, max_latency=60)
    decision, after = place_chain(PlacementRequest(chain, T3_DIST), w)
    assert decision.placed
    assert len(set(decision.assignments.values())) == 5
    assert check_placement(after, [chain]) == []


def test_backtracking_finds_what_first_fit_misses():
    # first fit puts v1 on the cheaper h1, which has no room left for v2, and a
    # zero latency budget forbids any hop; both apps fit together on h2
    w = mesh_world(["m1", "m2"], cpu=4)
    w = add_chain(w, linear_chain("pre", 1, cpu=2, prefix="p"))
    w = apply_assignment(w, "p.v1", "h1")
    chain = linear_chain("s", 2, cpu=2, max_latency=0)
    greedy, _ = place_chain(PlacementRequest(chain, T3_DIST), w, PlacementOptions(backtrack=False))
    full, after = place_chain(PlacementRequest(chain, T3_DIST), w)
    assert not greedy.placed
    assert full.placed
    assert full.assignments == {"s.v1": "h2", "s.v2": "h2"}
    assert greedy.reason == "no feasible host for s.v2"
    assert check_placement(after, [after.chains["pre"], chain]) == []


def test_three_table3_chains_all_placed():
    chains = [linear_chain(f"s{i}", 5) for i in (1, 2, 3)]
    decisions, w = place_all([PlacementRequest(c, T3_DIST) for c in chains], t3())
    assert [d.chain_id for d in decisions] == ["s1", "s2", "s3"]
    assert all(d.placed for d in decisions)
    assert check_placement(w, chains) == []


def test_larger_chain_goes_first():
    small = linear_chain("a", 5, cpu=2)
    big = linear_chain("b", 5, cpu=10)
    order = processing_order([PlacementRequest(small, T3_DIST), PlacementRequest(big, T3_DIST)])
    assert [r.chain.id for r in order] == ["b", "a"]


def test_no_requests():
    w = t3()
    decisions, after = place_all([], w)
    assert decisions == [] and after is w


def test_decisions_are_deterministic():
    chains = [linear_chain(f"s{i}", 5) for i in (1, 2, 3)]
    reqs = [PlacementRequest(c, T3_DIST) for c in chains]
    assert place_all(reqs, t3()) == place_all(reqs, t3())


def test_algorithm_digest_tracks_options():
    assert PlacementOptions().algorithm_digest != PlacementOptions(rank_mode="share").algorithm_digest
    with pytest.raises(ValueError):
        PlacementOptions(rank_mode="random")


@st.composite
def instances(draw):
    owners = draw(st.lists(st.sampled_from(["m1", "m2", "m3"]), min_size=1, max_size=4))
    n_apps = draw(st.integers(0, 4))
    cpu = draw(st.sampled_from([2.0, 3.0, 4.0, 6.0]))
    bw = draw(st.sampled_from([20.0, 50.0, 1000.0]))
    latency = draw(st.sampled_from([0.0, 15.0, 30.0, 50.0]))
    p1 = draw(st.sampled_from([0.0, 0.25, 0.5, 1.0]))
    mode = draw(st.sampled_from(["cost", "share"]))
    return owners, n_apps, cpu, bw, latency, p1, mode


@settings(max_examples=150, deadline=None)
@given(instances())
def test_heuristic_is_sound_and_never_beats_reference(case):
    owners, n_apps, cpu, bw, latency, p1, mode = case
    w = mesh_world(owners, cpu=cpu, mem=8192, bw=bw, max_vl=2)
    chain = linear_chain("s", n_apps, cpu=1.5, mem=1024, bw=20, max_latency=latency)
    dist = UserDistribution(50, {"m1": p1, "m2": (1 - p1) / 2})
    decision, after = place_chain(PlacementRequest(chain, dist), w, PlacementOptions(rank_mode=mode))
    best, feasible = ref_brute_force(add_chain(w, chain), chain, dist)
    if decision.placed:
        assert check_placement(after, [chain]) == []
        assert decision.cost.total >= best - 1e-9 * max(1.0, abs(best))
    else:
        assert feasible == 0
        assert after is w
