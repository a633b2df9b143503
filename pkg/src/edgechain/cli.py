"""Command-line entry point: ``edgechain <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from .consensus import audit_round, decision_digest, forge_decision, run_round
from .errors import EdgeChainError
from .harness import (
    CHAIN_HEADER,
    COMPARE_HEADER,
    HOST_HEADER,
    MECSP_HEADER,
    PLACEMENT_HEADER,
    chain_rows,
    fmt,
    host_rows,
    make_validators,
    mecsp_rows,
    placement_rows,
    run_compare,
    run_simulation,
    run_sweep,
    to_csv,
    write_csv,
)
from .ledger import ledger_digest, loads, open_ledger, post_request, replay_state, verify_bytes, write_ledger
from .model import add_chain, build_world
from .oracle import DEFAULT_LIMIT
from .placement import place_chain, processing_order
from .scenario import Coupling, SweepSpec, load_scenario


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_scenario(args.scenario)
    report = run_simulation(config, args.validators)
    chains_csv = to_csv(CHAIN_HEADER, chain_rows(report))
    sys.stdout.write(chains_csv)
    total = report.total
    print(f"# placed {sum(d.placed for d in report.decisions)}/{len(report.decisions)} chains")
    print(f"# total cost {fmt(total.total)} (host {fmt(total.host_cost)}, link {fmt(total.link_cost)})")
    print("# apps per mecsp " + " ".join(f"{m}={n}" for m, n in report.mecsp_counts.items()))
    print(f"# ledger {len(report.ledger)} blocks, digest {report.ledger_digest}")
    if args.out:
        out = Path(args.out)
        _write(out / "chains.csv", chains_csv)
        _write(out / "placements.csv", to_csv(PLACEMENT_HEADER, placement_rows(report)))
        _write(out / "hosts.csv", to_csv(HOST_HEADER, host_rows(report)))
        _write(out / "mecsps.csv", to_csv(MECSP_HEADER, mecsp_rows(report)))
        write_ledger(report.ledger, out / "ledger.jsonl")
    return 0 if report.all_placed else 1


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_scenario(args.scenario)
    spec = SweepSpec(args.param, args.start, args.stop, args.step, tuple(Coupling.parse(r) for r in args.coupled))
    header, rows = run_sweep(config, spec, args.validators)
    if args.csv == "-":
        write_csv(sys.stdout, header, rows)
    else:
        _write(Path(args.csv), to_csv(header, rows))
        print(f"wrote {len(rows)} rows to {args.csv}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    config = load_scenario(args.scenario)
    comparisons = run_compare(config, args.limit)
    write_csv(sys.stdout, COMPARE_HEADER, [c.row() for c in comparisons])
    return 0 if all(c.agreement for c in comparisons) else 1


def cmd_ledger(args: argparse.Namespace) -> int:
    data = Path(args.file).read_bytes()
    bad = verify_bytes(data)
    if bad is not None:
        print(f"invalid: first bad block index {bad}")
        return 1
    chain = loads(data)
    if args.action == "verify":
        print(f"ok: {len(chain)} blocks, digest {ledger_digest(chain)}")
        return 0
    state = replay_state(chain)
    placed = len(state.placement)
    print(f"ok: {len(chain)} blocks, digest {ledger_digest(chain)}")
    print(f"mecsps {len(state.mecsps)}, hosts {len(state.hosts)}, host links {len(state.host_links)}")
    print(f"chains {len(state.chains)}, placed apps {placed}")
    write_csv(
        sys.stdout,
        ["host", "mecsp", "apps", "cpu_remaining", "mem_remaining"],
        [[h, state.hosts[h].owner, len(state.host_loads.get(h, {})),
          state.remaining_cpu(h), state.remaining_mem(h)] for h in sorted(state.hosts)],
    )
    return 0


def cmd_consensus(args: argparse.Namespace) -> int:
    config = load_scenario(args.scenario)
    state = build_world(config)
    ledger = open_ledger(state)
    header = ["chain", "committed", "quorum", "validator", "honest", "vote", "algorithm", "agrees"]
    rows = []
    ok = True
    for request in processing_order(config.requests(), state.weights):
        ledger = post_request(ledger, request.chain)
        state = add_chain(state, request.chain)
        honest, _ = place_chain(request, state)
        forgery = forge_decision(request, state, honest) if args.byzantine else None
        validators = make_validators(args.validators, args.byzantine, forgery)
        outcome = run_round(request, ledger, validators)
        audit = audit_round(outcome, outcome.ledger)
        committed = audit.committed_digest
        ledger = outcome.ledger
        state = replay_state(ledger)
        ok &= committed == decision_digest(honest) and audit.transactions_match
        for v in validators:
            dd, algo = outcome.votes[v.id]
            rows.append([request.chain.id, committed or "none", outcome.quorum, v.id,
                         v.honest, dd[:16], algo[:16], committed == dd])
    write_csv(sys.stdout, header, rows)
    print(f"# ledger {len(ledger)} blocks, digest {ledger_digest(ledger)}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgechain",
        description="Multi-provider edge application placement with a replicated ledger.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="place every chain of a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--validators", type=int, default=5)
    p.add_argument("--out", help="directory for CSV files and ledger.jsonl")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="simulate over a range of one parameter")
    p.add_argument("--scenario", required=True)
    p.add_argument("--param", required=True, help="e.g. mecsps.m1.delta or user_distribution.shares.m1")
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--coupled", action="append", default=[],
                   help="rule such as user_distribution.shares.m2=1-x (repeatable)")
    p.add_argument("--csv", required=True, help="output path, or - for stdout")
    p.add_argument("--validators", type=int, default=5)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="heuristic against the exhaustive optimum")
    p.add_argument("--scenario", required=True)
    p.add_argument("--limit", type=int, default=DEFAULT_LIMIT)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ledger", help="inspect a ledger file")
    p.add_argument("action", choices=["verify", "replay"])
    p.add_argument("--file", required=True)
    p.set_defaults(func=cmd_ledger)

    p = sub.add_parser("consensus", help="placement rounds with Byzantine validators")
    p.add_argument("--scenario", required=True)
    p.add_argument("--validators", type=int, required=True)
    p.add_argument("--byzantine", type=int, required=True)
    p.set_defaults(func=cmd_consensus)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EdgeChainError, OSError, ValueError) as exc:
        print(f"edgechain: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
