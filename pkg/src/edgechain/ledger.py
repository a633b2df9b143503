"""Hash-chained ledger of placement state.

Blocks carry exactly one payload item each (after the genesis block):
an entity record (create/update/delete of a provider, host, host link,
chain, app or app link) or a placement transaction deducting an app's
resources from its host. Replaying the blocks in order rebuilds the
:class:`~edgechain.model.WorldState` they describe.

On disk a ledger is newline-delimited canonical JSON, one block per line.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Any, Union

from .canonical import canonical_json, digest, normalize, number
from .errors import (
    EdgeChainError,
    InvalidChain,
    LedgerFormatError,
    ReplayError,
)
from .model import (
    AppLink,
    HostLink,
    Mecsp,
    MeApp,
    MeHost,
    SvcChain,
    WorldState,
    add_chain,
    apply_assignment,
    remove_chain,
    replace_chain,
)

ZERO_HASH = "0" * 64


class RecordKind(str, Enum):
    MECSP = "MECSP"
    MEHOST = "MEHost"
    HOSTLINK = "HostLink"
    SVCCHAIN = "SvcChain"
    MEAPP = "MEApp"
    APPLINK = "AppLink"


class RecordOp(str, Enum):
    CREATE = "Create"
    UPDATE = "Update"
    DELETE = "Delete"


def _frozen(payload: Mapping[str, Any]) -> Mapping[str, Any]:
    # stored in canonical form so a parsed record equals the one that was written
    return MappingProxyType(normalize(dict(payload)))


@dataclass(frozen=True)
class LedgerRecord:
    kind: RecordKind
    op: RecordOp
    payload: Mapping[str, Any]
    prev_address: str | None
    address: str

    @staticmethod
    def compute_address(kind, op, payload, prev_address) -> str:
        return digest(
            {"kind": RecordKind(kind).value, "op": RecordOp(op).value,
             "payload": payload, "prev_address": prev_address}
        )

    @cached_property
    def address_ok(self) -> bool:
        # records are immutable, so every replay may reuse the first check
        return self.compute_address(self.kind, self.op, self.payload, self.prev_address) == self.address

    @classmethod
    def make(cls, kind, payload, op=RecordOp.CREATE, prev_address=None) -> LedgerRecord:
        kind, op = RecordKind(kind), RecordOp(op)
        payload = _frozen(payload)
        return cls(kind, op, payload, prev_address,
                   cls.compute_address(kind, op, payload, prev_address))

    def to_dict(self) -> dict:
        return {
            "type": "record",
            "address": self.address,
            "kind": self.kind.value,
            "op": self.op.value,
            "payload": self.payload,
            "prev_address": self.prev_address,
        }


@dataclass(frozen=True)
class PlacementTx:
    app_address: str
    host_address: str
    cpu_delta: float
    mem_delta: float
    resulting_remaining: tuple[float, float]
    algorithm_digest: str

    def to_dict(self) -> dict:
        return {
            "type": "placement",
            "app_address": self.app_address,
            "host_address": self.host_address,
            "cpu_delta": self.cpu_delta,
            "mem_delta": self.mem_delta,
            "resulting_remaining": list(self.resulting_remaining),
            "algorithm_digest": self.algorithm_digest,
        }


@dataclass(frozen=True)
class Genesis:
    weights: tuple[float, float] = (1.0, 1.0)

    def to_dict(self) -> dict:
        return {"type": "genesis", "weights": list(self.weights)}


PayloadItem = Union[LedgerRecord, PlacementTx, Genesis]


def _item_from_dict(d: Mapping[str, Any]) -> PayloadItem:
    t = d["type"]
    if t == "record":
        if set(d) != {"type", "address", "kind", "op", "payload", "prev_address"}:
            raise ValueError("unexpected record fields")
        if not isinstance(d["payload"], Mapping):
            raise ValueError("record payload must be an object")
        return LedgerRecord(
            RecordKind(d["kind"]), RecordOp(d["op"]), _frozen(d["payload"]),
            d["prev_address"], d["address"],
        )
    if t == "placement":
        rem = d["resulting_remaining"]
        return PlacementTx(
            d["app_address"], d["host_address"], number(d["cpu_delta"]),
            number(d["mem_delta"]), (number(rem[0]), number(rem[1])), d["algorithm_digest"],
        )
    if t == "genesis":
        w = d["weights"]
        return Genesis((number(w[0]), number(w[1])))
    raise ValueError(f"unknown payload type {t!r}")


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: str
    payload: tuple[PayloadItem, ...]
    timestamp: int
    hash: str

    @staticmethod
    def compute_hash(index, prev_hash, payload, timestamp) -> str:
        body = {
            "index": index,
            "prev_hash": prev_hash,
            "payload": [item.to_dict() for item in payload],
            "timestamp": timestamp,
        }
        return digest(body)

    @classmethod
    def make(cls, index: int, prev_hash: str, payload, timestamp: int) -> Block:
        payload = tuple(payload)
        return cls(index, prev_hash, payload, timestamp,
                   cls.compute_hash(index, prev_hash, payload, timestamp))

    @property
    def recomputed_hash(self) -> str:
        # blocks are immutable, so the recomputation is cached per object
        if "_rehash" not in self.__dict__:
            object.__setattr__(self, "_rehash", self.compute_hash(
                self.index, self.prev_hash, self.payload, self.timestamp))
        return self.__dict__["_rehash"]

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "prev_hash": self.prev_hash,
            "payload": [item.to_dict() for item in self.payload],
            "timestamp": self.timestamp,
            "hash": self.hash,
        }

    def to_line(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Block:
        if set(d) != {"index", "prev_hash", "payload", "timestamp", "hash"}:
            raise ValueError("unexpected block fields")
        if not isinstance(d["index"], int) or not isinstance(d["timestamp"], int):
            raise ValueError("index and timestamp must be integers")
        return cls(d["index"], d["prev_hash"], tuple(_item_from_dict(i) for i in d["payload"]),
                   d["timestamp"], d["hash"])


Ledger = list[Block]


# -- chain operations --------------------------------------------------------


def verify_chain(chain: Sequence[Block]) -> int | None:
    """Index of the first block whose hash or linkage fails, or None if valid."""
    prev = ZERO_HASH
    for i, block in enumerate(chain):
        if block.index != i or block.prev_hash != prev or block.recomputed_hash != block.hash:
            return i
        prev = block.hash
    return None


def head_hash(chain: Sequence[Block]) -> str:
    return chain[-1].hash if chain else ZERO_HASH


def append_block(
    chain: Sequence[Block], payload: Iterable[PayloadItem], timestamp: int | None = None
) -> Ledger:
    """New ledger with one more block; ``timestamp`` defaults to the block index."""
    bad = verify_chain(chain)
    if bad is not None:
        raise InvalidChain(bad)
    index = len(chain)
    block = Block.make(index, head_hash(chain), payload, index if timestamp is None else timestamp)
    return [*chain, block]


def _extend(chain: Sequence[Block], items: Iterable[PayloadItem]) -> Ledger:
    out = list(chain)
    for item in items:
        out = append_block(out, [item])
    return out


def genesis(weights: tuple[float, float] = (1.0, 1.0)) -> Ledger:
    return append_block([], [Genesis(tuple(weights))])


# -- entity payloads -----------------------------------------------------------


def address_book(chain: Sequence[Block]) -> dict[tuple[str, str], str]:
    """Current address of every live record, keyed by (kind, entity id)."""
    book: dict[tuple[str, str], str] = {}
    for block in chain:
        for item in block.payload:
            if not isinstance(item, LedgerRecord):
                continue
            key = (item.kind.value, _record_id(item.kind, item.payload))
            if item.op is RecordOp.DELETE:
                book.pop(key, None)
            else:
                book[key] = item.address
    return book


def _record_id(kind: RecordKind, payload: Mapping[str, Any]) -> str:
    if kind is RecordKind.APPLINK:
        return f"{payload['chain']}:{payload['src']}->{payload['dst']}"
    return payload["id"]


def mecsp_record(m: Mecsp, book=None) -> LedgerRecord:
    return LedgerRecord.make(RecordKind.MECSP, {
        "id": m.id, "gamma": m.gamma, "delta": m.delta, "kappa": m.kappa, "sigma": m.sigma})


def host_record(h: MeHost, book: Mapping) -> LedgerRecord:
    return LedgerRecord.make(RecordKind.MEHOST, {
        "id": h.id, "owner": h.owner, "owner_address": book[("MECSP", h.owner)],
        "cpu_capacity": h.cpu_capacity, "mem_capacity": h.mem_capacity})


def host_link_record(l: HostLink, book: Mapping) -> LedgerRecord:
    return LedgerRecord.make(RecordKind.HOSTLINK, {
        "id": l.id,
        "endpoint_a": l.endpoint_a, "endpoint_a_address": book[("MEHost", l.endpoint_a)],
        "endpoint_b": l.endpoint_b, "endpoint_b_address": book[("MEHost", l.endpoint_b)],
        "bandwidth_capacity": l.bandwidth_capacity, "latency_ms": l.latency_ms,
        "max_virtual_links": l.max_virtual_links})


def _post_records(chain: Sequence[Block], makers) -> Ledger:
    """Append one record per maker; each maker sees the address book so far."""
    book = address_book(chain)
    out = list(chain)
    for make in makers:
        record = make(book)
        out = append_block(out, [record])
        book[(record.kind.value, _record_id(record.kind, record.payload))] = record.address
    return out


def post_substrate(chain: Sequence[Block], state: WorldState) -> Ledger:
    makers = [lambda b, m=m: mecsp_record(m) for m in state.mecsps.values()]
    makers += [lambda b, h=h: host_record(h, b) for h in state.hosts.values()]
    makers += [lambda b, l=l: host_link_record(l, b) for l in state.host_links.values()]
    return _post_records(chain, makers)


def post_request(chain: Sequence[Block], svc: SvcChain) -> Ledger:
    """Record a chain request: the chain, each app, then each app link."""

    def chain_rec(book):
        return LedgerRecord.make(RecordKind.SVCCHAIN, {
            "id": svc.id, "max_latency_ms": svc.max_latency_ms,
            "requested_by": svc.requested_by})

    def app_rec(book, a: MeApp):
        return LedgerRecord.make(RecordKind.MEAPP, {
            "id": a.id, "vendor": a.vendor, "cpu_demand": a.cpu_demand,
            "mem_demand": a.mem_demand, "max_latency_ms": a.max_latency_ms,
            "chain": svc.id, "chain_address": book[("SvcChain", svc.id)]})

    def link_rec(book, l: AppLink):
        return LedgerRecord.make(RecordKind.APPLINK, {
            "src": l.src, "src_address": book[("MEApp", l.src)],
            "dst": l.dst, "dst_address": book[("MEApp", l.dst)],
            "bandwidth_demand": l.bandwidth_demand,
            "chain": svc.id, "chain_address": book[("SvcChain", svc.id)]})

    makers = [chain_rec]
    makers += [lambda b, a=a: app_rec(b, a) for a in svc.apps]
    makers += [lambda b, l=l: link_rec(b, l) for l in svc.links]
    return _post_records(chain, makers)


def open_ledger(state: WorldState) -> Ledger:
    """Genesis plus records for the substrate and registered chains of ``state``."""
    if state.placement:
        raise ValueError("open_ledger expects a world without placements")
    chain = post_substrate(genesis(state.weights), state)
    for svc in state.chains.values():
        chain = post_request(chain, svc)
    return chain


def post_placement(chain: Sequence[Block], decision, state: WorldState) -> Ledger:
    """Append one placement transaction per assignment of a placed decision.

    ``state`` is the world before the decision; each transaction records the
    host's remaining resources after its own deduction.
    """
    if not decision.placed:
        return list(chain)
    book = address_book(chain)
    items = []
    svc = state.chains[decision.chain_id]
    for app_id in svc.app_ids:
        host_id = decision.assignments[app_id]
        app = state.app(app_id)
        state = apply_assignment(state, app_id, host_id)
        items.append(PlacementTx(
            app_address=book[("MEApp", app_id)],
            host_address=book[("MEHost", host_id)],
            cpu_delta=app.cpu_demand,
            mem_delta=app.mem_demand,
            resulting_remaining=(state.remaining_cpu(host_id), state.remaining_mem(host_id)),
            algorithm_digest=decision.algorithm_digest,
        ))
    return _extend(chain, items)


# -- replay --------------------------------------------------------------------


@dataclass
class _Replayer:
    state: WorldState
    live: dict[str, tuple[RecordKind, str]] = field(default_factory=dict)

    def ref(self, address: str, kind: RecordKind, expected_id: str | None = None) -> str:
        entry = self.live.get(address)
        if entry is None or entry[0] is not kind:
            raise ValueError(f"dangling {kind.value} address {address[:12]}")
        if expected_id is not None and entry[1] != expected_id:
            raise ValueError(f"address {address[:12]} names {entry[1]}, not {expected_id}")
        return entry[1]

    def record(self, rec: LedgerRecord) -> None:
        if not rec.address_ok:
            raise ValueError("record address does not match its content")
        if rec.address in self.live:
            raise ValueError(f"duplicate record {rec.address[:12]}")
        p = rec.payload
        if rec.op is RecordOp.CREATE:
            if rec.prev_address is not None:
                raise ValueError("create records have no prev_address")
            self._create(rec.kind, p)
        else:
            prev = self.live.get(rec.prev_address)
            if prev is None or prev[0] is not rec.kind:
                raise ValueError("update/delete must follow a live record of the same kind")
            if prev[1] != _record_id(rec.kind, p):
                raise ValueError("update/delete changes the entity id")
            del self.live[rec.prev_address]
            if rec.op is RecordOp.UPDATE:
                self._update(rec.kind, p)
            else:
                self._delete(rec.kind, prev[1])
        if rec.op is not RecordOp.DELETE:
            self.live[rec.address] = (rec.kind, _record_id(rec.kind, p))

    def _create(self, kind: RecordKind, p: Mapping[str, Any]) -> None:
        st = self.state
        if kind is RecordKind.MECSP:
            if p["id"] in st.mecsps:
                raise ValueError(f"duplicate mecsp {p['id']}")
            self.state = st._evolve(mecsps={**st.mecsps, p["id"]: _mecsp(p)})
        elif kind is RecordKind.MEHOST:
            self.ref(p["owner_address"], RecordKind.MECSP, p["owner"])
            if p["id"] in st.hosts:
                raise ValueError(f"duplicate host {p['id']}")
            self.state = st._evolve(hosts={**st.hosts, p["id"]: _host(p)})
        elif kind is RecordKind.HOSTLINK:
            self.ref(p["endpoint_a_address"], RecordKind.MEHOST, p["endpoint_a"])
            self.ref(p["endpoint_b_address"], RecordKind.MEHOST, p["endpoint_b"])
            link = _host_link(p)
            if p["id"] in st.host_links or st.link_between(link.endpoint_a, link.endpoint_b):
                raise ValueError(f"duplicate host link {p['id']}")
            self.state = st._evolve(host_links={**st.host_links, p["id"]: link})
        elif kind is RecordKind.SVCCHAIN:
            self.state = add_chain(st, SvcChain(
                p["id"], (), (), number(p["max_latency_ms"]), p["requested_by"]))
        elif kind is RecordKind.MEAPP:
            svc = st.chains[self.ref(p["chain_address"], RecordKind.SVCCHAIN, p["chain"])]
            app = MeApp(p["id"], p["vendor"], number(p["cpu_demand"]), number(p["mem_demand"]),
                        None if p["max_latency_ms"] is None else number(p["max_latency_ms"]))
            self.state = replace_chain(st, replace(svc, apps=svc.apps + (app,)))
        elif kind is RecordKind.APPLINK:
            svc = st.chains[self.ref(p["chain_address"], RecordKind.SVCCHAIN, p["chain"])]
            self.ref(p["src_address"], RecordKind.MEAPP, p["src"])
            self.ref(p["dst_address"], RecordKind.MEAPP, p["dst"])
            link = AppLink(p["src"], p["dst"], number(p["bandwidth_demand"]))
            self.state = replace_chain(st, replace(svc, links=svc.links + (link,)))

    def _update(self, kind: RecordKind, p: Mapping[str, Any]) -> None:
        st = self.state
        if kind is RecordKind.MECSP:
            self.state = st._evolve(mecsps={**st.mecsps, p["id"]: _mecsp(p)})
        elif kind is RecordKind.MEHOST:
            host = _host(p)
            if host.owner != st.hosts[host.id].owner:
                raise ValueError("a host cannot change owner")
            if st.used_cpu(host.id) > host.cpu_capacity or st.used_mem(host.id) > host.mem_capacity:
                raise ValueError(f"host {host.id} update below current usage")
            self.state = st._evolve(hosts={**st.hosts, host.id: host})
        elif kind is RecordKind.HOSTLINK:
            link = _host_link(p)
            if link.pair != st.host_links[link.id].pair:
                raise ValueError("a host link cannot change endpoints")
            if (st.used_bandwidth(link.id) > link.bandwidth_capacity
                    or st.applink_count(link.id) > link.max_virtual_links):
                raise ValueError(f"link {link.id} update below current usage")
            self.state = st._evolve(host_links={**st.host_links, link.id: link})
        elif kind is RecordKind.SVCCHAIN:
            svc = st.chains[p["id"]]
            self.state = replace_chain(st, replace(
                svc, max_latency_ms=number(p["max_latency_ms"]), requested_by=p["requested_by"]))
        else:
            raise ValueError(f"{kind.value} records cannot be updated")

    def _delete(self, kind: RecordKind, entity_id: str) -> None:
        st = self.state
        if kind is RecordKind.MECSP:
            if any(h.owner == entity_id for h in st.hosts.values()):
                raise ValueError(f"mecsp {entity_id} still owns hosts")
            self.state = st._evolve(mecsps={k: v for k, v in st.mecsps.items() if k != entity_id})
        elif kind is RecordKind.MEHOST:
            if st.host_loads.get(entity_id) or any(
                    entity_id in l.pair for l in st.host_links.values()):
                raise ValueError(f"host {entity_id} still carries apps or links")
            self.state = st._evolve(hosts={k: v for k, v in st.hosts.items() if k != entity_id})
        elif kind is RecordKind.HOSTLINK:
            if st.link_loads.get(entity_id):
                raise ValueError(f"link {entity_id} still carries app links")
            self.state = st._evolve(
                host_links={k: v for k, v in st.host_links.items() if k != entity_id})
        elif kind is RecordKind.SVCCHAIN:
            svc = st.chains[entity_id]
            self.state = remove_chain(st, entity_id)
            for address, (k, ident) in list(self.live.items()):
                if k is RecordKind.MEAPP and ident in svc.app_ids:
                    del self.live[address]
                elif k is RecordKind.APPLINK and ident.startswith(f"{entity_id}:"):
                    del self.live[address]
        else:
            raise ValueError(f"{kind.value} records cannot be deleted on their own")

    def placement(self, tx: PlacementTx) -> None:
        app_id = self.ref(tx.app_address, RecordKind.MEAPP)
        host_id = self.ref(tx.host_address, RecordKind.MEHOST)
        app = self.state.app(app_id)
        if (tx.cpu_delta, tx.mem_delta) != (app.cpu_demand, app.mem_demand):
            raise ValueError(f"deltas do not match the demand of {app_id}")
        self.state = apply_assignment(self.state, app_id, host_id)
        remaining = (self.state.remaining_cpu(host_id), self.state.remaining_mem(host_id))
        if tuple(tx.resulting_remaining) != remaining:
            raise ValueError(f"recorded remaining {tx.resulting_remaining} != {remaining}")


def _mecsp(p) -> Mecsp:
    return Mecsp(p["id"], number(p["gamma"]), number(p["delta"]),
                 number(p["kappa"]), number(p["sigma"]))


def _host(p) -> MeHost:
    return MeHost(p["id"], p["owner"], number(p["cpu_capacity"]), number(p["mem_capacity"]))


def _host_link(p) -> HostLink:
    return HostLink(p["id"], p["endpoint_a"], p["endpoint_b"], number(p["bandwidth_capacity"]),
                    number(p["latency_ms"]), p["max_virtual_links"])


def replay_state(chain: Sequence[Block]) -> WorldState:
    """Fold every block of a valid ledger into the world it describes."""
    weights = (1.0, 1.0)
    if chain and chain[0].payload and isinstance(chain[0].payload[0], Genesis):
        weights = chain[0].payload[0].weights
    replayer = _Replayer(WorldState({}, {}, {}, weights=weights))
    for i, block in enumerate(chain):
        for item in block.payload:
            try:
                if isinstance(item, Genesis):
                    if i != 0:
                        raise ValueError("genesis item outside block 0")
                elif isinstance(item, LedgerRecord):
                    replayer.record(item)
                else:
                    replayer.placement(item)
            except (ValueError, KeyError, TypeError, EdgeChainError) as exc:
                raise ReplayError(i, str(exc)) from exc
    return replayer.state


# -- files -----------------------------------------------------------------------


def dumps(chain: Sequence[Block]) -> str:
    return "".join(block.to_line() + "\n" for block in chain)


def write_ledger(chain: Sequence[Block], path: str | Path) -> None:
    Path(path).write_bytes(dumps(chain).encode("utf-8"))


def parse_line(raw: bytes, index: int) -> Block:
    """Strictly parse one serialized block; anything non-canonical is rejected."""
    try:
        text = raw.decode("utf-8")
        block = Block.from_dict(json.loads(text))
    except (UnicodeDecodeError, ValueError, KeyError, TypeError, IndexError) as exc:
        raise LedgerFormatError(index, f"malformed block: {exc}") from exc
    if block.to_line() != text:
        raise LedgerFormatError(index, "block is not in canonical form")
    return block


def loads(data: bytes) -> Ledger:
    if data and not data.endswith(b"\n"):
        raise LedgerFormatError(data.count(b"\n"), "missing final newline")
    return [parse_line(raw, i) for i, raw in enumerate(data.split(b"\n")[:-1])]


def read_ledger(path: str | Path) -> Ledger:
    return loads(Path(path).read_bytes())


def verify_bytes(data: bytes) -> int | None:
    """First bad block index of a serialized ledger, or None if it verifies."""
    try:
        chain = loads(data)
    except LedgerFormatError as exc:
        return exc.index
    return verify_chain(chain)


def ledger_digest(chain: Sequence[Block]) -> str:
    """The head hash, which commits to every block before it."""
    return head_hash(chain)
