"""End-to-end runs: simulation through the validator layer, sweeps, and
heuristic-versus-optimum comparisons, with CSV emission."""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any, TextIO

from .consensus import ConsensusOutcome, Validator, decision_digest, forge_decision, run_round
from .cost import CostBreakdown
from .feasibility import check_placement
from .ledger import Ledger, ledger_digest, open_ledger, post_request
from .model import WorldState, add_chain, apply_assignment, build_world
from .oracle import DEFAULT_LIMIT, solve_exact
from .placement import (
    DEFAULT_OPTIONS,
    Outcome,
    PlacementDecision,
    PlacementOptions,
    place_chain,
    processing_order,
)
from .scenario import ScenarioConfig, SweepSpec, scenario_at


@dataclass
class SimulationReport:
    config: ScenarioConfig
    decisions: list[PlacementDecision]
    outcomes: list[ConsensusOutcome]
    state: WorldState
    ledger: Ledger
    host_counts: dict[str, int] = field(default_factory=dict)
    mecsp_counts: dict[str, int] = field(default_factory=dict)

    @property
    def ledger_digest(self) -> str:
        return ledger_digest(self.ledger)

    @property
    def total(self) -> CostBreakdown:
        placed = [d.cost for d in self.decisions if d.placed]
        return CostBreakdown(
            math.fsum(c.host_cost for c in placed),
            math.fsum(c.link_cost for c in placed),
            max((c.latency_ms for c in placed), default=0.0),
        )

    @property
    def all_placed(self) -> bool:
        return all(d.placed for d in self.decisions)


def make_validators(
    count: int, byzantine: int = 0, forgery: PlacementDecision | None = None,
    options: PlacementOptions = DEFAULT_OPTIONS,
) -> list[Validator]:
    """``count`` validators, the last ``byzantine`` of which all submit ``forgery``."""
    if count < 1:
        raise ValueError("at least one validator is required")
    if not 0 <= byzantine <= count:
        raise ValueError("byzantine count must lie in [0, validators]")
    width = len(str(count))
    return [
        Validator(f"n{i + 1:0{width}d}", forgery if i >= count - byzantine else None, options)
        for i in range(count)
    ]


def run_simulation(
    config: ScenarioConfig,
    validators: int = 5,
    byzantine: int = 0,
    options: PlacementOptions = DEFAULT_OPTIONS,
) -> SimulationReport:
    """Place every chain of the scenario through majority rounds, recording the ledger."""
    state = build_world(config)
    ledger = open_ledger(state)
    decisions, outcomes = [], []
    for request in processing_order(config.requests(), state.weights):
        chain = request.chain
        ledger = post_request(ledger, chain)
        state = add_chain(state, chain)
        forgery = None
        if byzantine:
            honest, _ = place_chain(request, state, options)
            forgery = forge_decision(request, state, honest)
        outcome = run_round(request, ledger, make_validators(validators, byzantine, forgery, options))
        ledger = outcome.ledger
        outcomes.append(outcome)
        decision = outcome.committed
        if decision is None:
            decision = PlacementDecision(
                chain.id, {}, None, Outcome.INFEASIBLE, "no majority among validators",
                options.algorithm_digest,
            )
        elif decision.placed:
            for app_id in chain.app_ids:
                state = apply_assignment(state, app_id, decision.assignments[app_id])
        decisions.append(decision)

    placed_chains = [state.chains[d.chain_id] for d in decisions if d.placed]
    violations = check_placement(state, placed_chains)
    if violations:
        raise RuntimeError(f"committed placements violate constraints: {violations}")

    host_counts = {h: len(state.host_loads.get(h, {})) for h in sorted(state.hosts)}
    mecsp_counts = {m: 0 for m in state.mecsps}
    for h, n in host_counts.items():
        mecsp_counts[state.hosts[h].owner] += n
    return SimulationReport(config, decisions, outcomes, state, ledger, host_counts, mecsp_counts)


# -- CSV ------------------------------------------------------------------------


def fmt(value: Any) -> str:
    """CSV cell text: at most six fractional digits, no trailing zeros."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        text = f"{value:.6f}".rstrip("0").rstrip(".")
        return "0" if text in ("-0", "") else text
    return str(value)


def write_csv(stream: TextIO, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])


def to_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    write_csv(buf, header, rows)
    return buf.getvalue()


CHAIN_HEADER = ["chain", "outcome", "apps", "host_cost", "link_cost", "total_cost",
                "latency_ms", "votes_for", "validators", "reason"]


def chain_rows(report: SimulationReport) -> list[list[Any]]:
    rows = []
    for decision, outcome in zip(report.decisions, report.outcomes):
        cost = decision.cost
        votes_for = 0
        if outcome.committed is not None:
            dd = decision_digest(outcome.committed)
            votes_for = sum(1 for v, _ in outcome.votes.values() if v == dd)
        rows.append([
            decision.chain_id, decision.outcome.value, len(decision.assignments),
            cost.host_cost if cost else None, cost.link_cost if cost else None,
            cost.total if cost else None, cost.latency_ms if cost else None,
            votes_for, len(outcome.votes), decision.reason,
        ])
    return rows


PLACEMENT_HEADER = ["chain", "app", "host", "mecsp"]


def placement_rows(report: SimulationReport) -> list[list[Any]]:
    st = report.state
    return [
        [d.chain_id, app, host, st.hosts[host].owner]
        for d in report.decisions if d.placed
        for app, host in d.assignments.items()
    ]


HOST_HEADER = ["host", "mecsp", "apps", "cpu_used", "cpu_remaining", "mem_used", "mem_remaining"]


def host_rows(report: SimulationReport) -> list[list[Any]]:
    st = report.state
    return [
        [h, st.hosts[h].owner, report.host_counts[h], st.used_cpu(h), st.remaining_cpu(h),
         st.used_mem(h), st.remaining_mem(h)]
        for h in sorted(st.hosts)
    ]


MECSP_HEADER = ["mecsp", "apps", "share"]


def mecsp_rows(report: SimulationReport) -> list[list[Any]]:
    dist = report.config.user_distribution
    return [[m, n, dist.share(m)] for m, n in report.mecsp_counts.items()]


# -- sweeps ---------------------------------------------------------------------


def sweep_header(config: ScenarioConfig) -> list[str]:
    return (
        ["param", "value", "feasible", "placed_chains", "host_cost", "link_cost", "total_cost"]
        + [f"apps_{m.id}" for m in config.mecsps]
        + [f"apps_{h.id}" for h in config.hosts]
        + [f"latency_{c.id}" for c in config.chains]
    )


def run_sweep(
    config: ScenarioConfig,
    spec: SweepSpec,
    validators: int = 5,
    options: PlacementOptions = DEFAULT_OPTIONS,
) -> tuple[list[str], list[list[Any]]]:
    """One row per sweep point, each simulated on a fresh world."""
    header = sweep_header(config)
    rows = []
    for x in spec.points():
        report = run_simulation(scenario_at(config, spec, x), validators, options=options)
        total = report.total
        latency = {d.chain_id: d.cost.latency_ms for d in report.decisions if d.placed}
        rows.append(
            [spec.param, x, report.all_placed, sum(d.placed for d in report.decisions),
             total.host_cost, total.link_cost, total.total]
            + [report.mecsp_counts[m.id] for m in config.mecsps]
            + [report.host_counts[h.id] for h in config.hosts]
            + [latency.get(c.id) for c in config.chains]
        )
    return header, rows


# -- heuristic versus optimum ------------------------------------------------------------


COMPARE_HEADER = ["chain", "heuristic_outcome", "heuristic_cost", "oracle_outcome",
                  "oracle_cost", "ratio", "same_assignment", "agreement", "evaluated",
                  "feasible_count"]


@dataclass(frozen=True)
class Comparison:
    chain_id: str
    heuristic: PlacementDecision
    oracle_best: dict[str, str] | None
    oracle_cost: CostBreakdown | None
    evaluated: int
    feasible_count: int

    @property
    def ratio(self) -> float | None:
        if not self.heuristic.placed or self.oracle_cost is None:
            return None
        h, o = self.heuristic.cost.total, self.oracle_cost.total
        if o == 0:
            return 1.0 if h == 0 else math.inf
        return h / o

    @property
    def agreement(self) -> bool:
        """Both sides reach the same feasibility verdict."""
        return self.heuristic.placed == (self.oracle_best is not None)

    def row(self) -> list[Any]:
        return [
            self.chain_id, self.heuristic.outcome.value,
            self.heuristic.cost.total if self.heuristic.placed else None,
            "placed" if self.oracle_best is not None else "infeasible",
            self.oracle_cost.total if self.oracle_cost else None,
            self.ratio,
            self.oracle_best is not None and self.heuristic.assignments == self.oracle_best,
            self.agreement, self.evaluated, self.feasible_count,
        ]


def run_compare(
    config: ScenarioConfig,
    limit: int = DEFAULT_LIMIT,
    options: PlacementOptions = DEFAULT_OPTIONS,
) -> list[Comparison]:
    """Heuristic against the exhaustive optimum, chain by chain.

    Chains are placed heuristically in processing order on one evolving world;
    each oracle run sees the same world the heuristic saw for that chain.
    """
    state = build_world(config)
    out = []
    for request in processing_order(config.requests(), state.weights):
        exact = solve_exact(request.chain, state, request.dist, limit)
        decision, state = place_chain(request, state, options)
        out.append(Comparison(request.chain.id, decision, exact.best, exact.best_cost,
                              exact.evaluated, exact.feasible_count))
    return out
