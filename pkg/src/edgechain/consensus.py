"""Majority agreement among validators running the placement algorithm.

Every validator replays the same ledger and proposes a decision; a decision
commits only when a strict majority proposes the identical one, after which
its placement transactions are appended to the ledger.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

from .canonical import digest
from .errors import InvalidChain
from .ledger import Block, Ledger, PlacementTx, address_book, post_placement, replay_state, verify_chain
from .model import WorldState
from .placement import (
    DEFAULT_OPTIONS,
    Outcome,
    PlacementDecision,
    PlacementOptions,
    PlacementRequest,
    place_chain,
)

FORGED_ALGORITHM_DIGEST = digest({"algorithm": "forged"})


@dataclass(frozen=True)
class Validator:
    """A party executing the placement; with ``forgery`` set it is Byzantine."""

    id: str
    forgery: PlacementDecision | None = None
    options: PlacementOptions = DEFAULT_OPTIONS

    @property
    def honest(self) -> bool:
        return self.forgery is None

    def decide(self, request: PlacementRequest, ledger: Sequence[Block]) -> PlacementDecision:
        if self.forgery is not None:
            return self.forgery
        decision, _ = place_chain(request, replay_state(ledger), self.options)
        return decision


def decision_digest(decision: PlacementDecision) -> str:
    return digest(
        {
            "chain_id": decision.chain_id,
            "assignments": sorted(decision.assignments.items()),
            "algorithm_digest": decision.algorithm_digest,
        }
    )


@dataclass(frozen=True)
class ConsensusOutcome:
    committed: PlacementDecision | None
    # validator id -> (decision digest, algorithm digest)
    votes: dict[str, tuple[str, str]]
    quorum: int
    ledger: Ledger
    base_length: int
    decisions: dict[str, PlacementDecision] = field(default_factory=dict, repr=False)


def run_round(
    request: PlacementRequest,
    ledger: Sequence[Block],
    validators: Sequence[Validator],
) -> ConsensusOutcome:
    """One placement round; the chain must already be registered on the ledger."""
    if not validators:
        raise ValueError("a round needs at least one validator")
    bad = verify_chain(ledger)
    if bad is not None:
        raise InvalidChain(bad)

    decisions = {v.id: v.decide(request, ledger) for v in validators}
    votes = {vid: (decision_digest(d), d.algorithm_digest) for vid, d in decisions.items()}
    tally: dict[str, list[str]] = {}
    for vid, (dd, _) in votes.items():
        tally.setdefault(dd, []).append(vid)
    quorum = len(validators) // 2 + 1

    committed = None
    new_ledger = list(ledger)
    for voters in tally.values():
        if len(voters) >= quorum:
            committed = decisions[voters[0]]
            new_ledger = post_placement(ledger, committed, replay_state(ledger))
            break
    return ConsensusOutcome(committed, votes, quorum, new_ledger, len(ledger), decisions)


def forge_decision(
    request: PlacementRequest, state: WorldState, honest: PlacementDecision | None = None
) -> PlacementDecision:
    """A fixed, well-formed decision that differs from the honest one.

    Every app goes to the last host by id (the first one if that is what the
    honest decision already does).
    """
    hosts = sorted(state.hosts)
    apps = request.chain.app_ids
    target = hosts[-1] if hosts else "h?"
    assignments = {a: target for a in apps}
    if honest is not None and honest.assignments == assignments and len(hosts) > 1:
        assignments = {a: hosts[0] for a in apps}
    return PlacementDecision(
        request.chain.id, assignments, None, Outcome.PLACED, "", FORGED_ALGORITHM_DIGEST
    )


@dataclass(frozen=True)
class AuditReport:
    no_quorum: bool
    committed_digest: str | None
    # validator id -> decision digest, for every vote differing from the committed one
    dissenters: dict[str, str]
    # validator id -> algorithm digest, for every digest differing from the reference
    algorithm_mismatches: dict[str, str]
    transactions: dict[str, str]
    transactions_match: bool


def audit_round(
    outcome: ConsensusOutcome,
    ledger: Sequence[Block],
    reference_algorithm: str | None = None,
) -> AuditReport:
    """Cross-check a round's votes against what the ledger actually recorded.

    ``reference_algorithm`` defaults to the committed decision's algorithm
    digest, or to the default placement options when nothing committed.
    """
    book = {addr: ident for (kind, ident), addr in address_book(ledger).items()}
    transactions = {}
    for block in ledger[outcome.base_length:]:
        for item in block.payload:
            if isinstance(item, PlacementTx):
                transactions[book.get(item.app_address, item.app_address)] = book.get(
                    item.host_address, item.host_address
                )

    committed = outcome.committed
    if reference_algorithm is None:
        reference_algorithm = (
            committed.algorithm_digest if committed else DEFAULT_OPTIONS.algorithm_digest
        )
    mismatches = {
        vid: algo for vid, (_, algo) in outcome.votes.items() if algo != reference_algorithm
    }
    if committed is None:
        return AuditReport(True, None, {}, mismatches, transactions, not transactions)

    committed_digest = decision_digest(committed)
    dissenters = {vid: dd for vid, (dd, _) in outcome.votes.items() if dd != committed_digest}
    expected = committed.assignments if committed.outcome is Outcome.PLACED else {}
    return AuditReport(
        False, committed_digest, dissenters, mismatches, transactions, transactions == expected
    )
