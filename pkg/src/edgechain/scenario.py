"""Scenario files: a YAML tree describing substrate, chains and users."""

from __future__ import annotations

import copy
import logging
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .errors import ScenarioError, ValidationError
from .model import (
    DEFAULT_MAX_VIRTUAL_LINKS,
    EPS,
    AppLink,
    HostLink,
    Mecsp,
    MeApp,
    MeHost,
    SvcChain,
    UserDistribution,
    world,
)
from .placement import PlacementRequest

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioConfig:
    mecsps: tuple[Mecsp, ...]
    hosts: tuple[MeHost, ...]
    host_links: tuple[HostLink, ...]
    chains: tuple[SvcChain, ...]
    user_distribution: UserDistribution
    weights: tuple[float, float] = (1.0, 1.0)
    max_virtual_links: int = DEFAULT_MAX_VIRTUAL_LINKS
    seed: int = 0
    chain_distributions: dict[str, UserDistribution] = field(default_factory=dict)
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def distribution_for(self, chain_id: str) -> UserDistribution:
        return self.chain_distributions.get(chain_id, self.user_distribution)

    def requests(self) -> list[PlacementRequest]:
        return [PlacementRequest(c, self.distribution_for(c.id)) for c in self.chains]


# -- field helpers -----------------------------------------------------------


def _mapping(node: Any, where: str) -> dict:
    if not isinstance(node, dict):
        raise ScenarioError(f"{where}: expected a mapping")
    return node


def _list(node: Any, where: str) -> list:
    if not isinstance(node, list):
        raise ScenarioError(f"{where}: expected a list")
    return node


def _keys(node: dict, where: str, required: set[str], optional: set[str] = frozenset()) -> None:
    missing = required - node.keys()
    if missing:
        raise ScenarioError(f"{where}: missing {', '.join(sorted(missing))}")
    unknown = node.keys() - required - optional
    if unknown:
        raise ScenarioError(f"{where}: unknown field(s) {', '.join(sorted(unknown))}")


def _num(node: dict, key: str, where: str, default: Any = None) -> float:
    value = node.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"{where}.{key}: expected a finite number")
    return value


def _int(node: dict, key: str, where: str, default: Any = None) -> int:
    value = node.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{where}.{key}: expected an integer")
    return value


def _str(node: dict, key: str, where: str, default: Any = None) -> str:
    value = node.get(key, default)
    if not isinstance(value, str) or not value:
        raise ScenarioError(f"{where}.{key}: expected a non-empty string")
    return value


def _build(where: str, factory, *args):
    try:
        return factory(*args)
    except ValidationError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


# -- parsing -------------------------------------------------------------------


def _distribution(node: Any, where: str) -> UserDistribution:
    node = _mapping(node, where)
    _keys(node, where, {"total_users"}, {"shares"})
    shares = _mapping(node.get("shares", {}), f"{where}.shares")
    parsed = {str(m): _num(shares, m, f"{where}.shares") for m in shares}
    return _build(where, UserDistribution, _int(node, "total_users", where), parsed)


def _links(node: Any, hosts: list[MeHost], max_vl: int) -> list[HostLink]:
    if isinstance(node, dict):
        _keys(node, "host_links", {"full_mesh"})
        mesh = _mapping(node["full_mesh"], "host_links.full_mesh")
        where = "host_links.full_mesh"
        _keys(mesh, where, {"bandwidth_capacity", "latency_ms"}, {"max_virtual_links"})
        bw = _num(mesh, "bandwidth_capacity", where)
        lat = _num(mesh, "latency_ms", where)
        vl = _int(mesh, "max_virtual_links", where, max_vl)
        ids = [h.id for h in hosts]
        return [
            _build(where, HostLink, f"{a}-{b}", a, b, bw, lat, vl)
            for i, a in enumerate(ids)
            for b in ids[i + 1:]
        ]
    out: list[HostLink] = []
    seen: set[frozenset[str]] = set()
    for i, item in enumerate(_list(node, "host_links")):
        where = f"host_links[{i}]"
        item = _mapping(item, where)
        _keys(item, where, {"id", "endpoint_a", "endpoint_b", "bandwidth_capacity", "latency_ms"},
              {"max_virtual_links"})
        link = _build(
            where, HostLink, _str(item, "id", where), _str(item, "endpoint_a", where),
            _str(item, "endpoint_b", where), _num(item, "bandwidth_capacity", where),
            _num(item, "latency_ms", where), _int(item, "max_virtual_links", where, max_vl),
        )
        if link.pair in seen:
            log.warning("%s: second link for host pair %s dropped", where, sorted(link.pair))
            continue
        seen.add(link.pair)
        out.append(link)
    return out


def _chain(node: Any, where: str) -> tuple[SvcChain, UserDistribution | None]:
    node = _mapping(node, where)
    _keys(node, where, {"id", "apps", "max_latency_ms"},
          {"links", "requested_by", "user_distribution"})
    apps = []
    for j, a in enumerate(_list(node["apps"], f"{where}.apps")):
        w = f"{where}.apps[{j}]"
        a = _mapping(a, w)
        _keys(a, w, {"id", "cpu_demand", "mem_demand"}, {"vendor", "max_latency_ms"})
        budget = None if a.get("max_latency_ms") is None else _num(a, "max_latency_ms", w)
        apps.append(_build(w, MeApp, _str(a, "id", w), str(a.get("vendor", "")),
                           _num(a, "cpu_demand", w), _num(a, "mem_demand", w), budget))
    links = []
    for j, l in enumerate(_list(node.get("links", []), f"{where}.links")):
        w = f"{where}.links[{j}]"
        l = _mapping(l, w)
        _keys(l, w, {"src", "dst", "bandwidth_demand"})
        links.append(_build(w, AppLink, _str(l, "src", w), _str(l, "dst", w),
                            _num(l, "bandwidth_demand", w)))
    chain = _build(where, SvcChain, _str(node, "id", where), apps, links,
                   _num(node, "max_latency_ms", where), str(node.get("requested_by", "")))
    dist = None
    if "user_distribution" in node:
        dist = _distribution(node["user_distribution"], f"{where}.user_distribution")
    return chain, dist


TOP_LEVEL = {"mecsps", "hosts", "host_links", "chains", "user_distribution"}
TOP_LEVEL_OPTIONAL = {"weights", "defaults", "seed", "name", "description"}


def scenario_from_dict(tree: Any) -> ScenarioConfig:
    """Validate a parsed scenario tree."""
    tree = _mapping(tree, "scenario")
    _keys(tree, "scenario", TOP_LEVEL, TOP_LEVEL_OPTIONAL)

    weights_node = _mapping(tree.get("weights", {}), "weights")
    _keys(weights_node, "weights", set(), {"cpu", "mem"})
    weights = (_num(weights_node, "cpu", "weights", 1.0), _num(weights_node, "mem", "weights", 1.0))
    defaults = _mapping(tree.get("defaults", {}), "defaults")
    _keys(defaults, "defaults", set(), {"max_virtual_links"})
    max_vl = _int(defaults, "max_virtual_links", "defaults", DEFAULT_MAX_VIRTUAL_LINKS)
    seed = _int(tree, "seed", "scenario", 0)

    mecsps = []
    for i, m in enumerate(_list(tree["mecsps"], "mecsps")):
        w = f"mecsps[{i}]"
        m = _mapping(m, w)
        _keys(m, w, {"id", "gamma", "delta", "kappa", "sigma"})
        mecsps.append(_build(w, Mecsp, _str(m, "id", w), *(
            _num(m, k, w) for k in ("gamma", "delta", "kappa", "sigma"))))
    hosts = []
    for i, h in enumerate(_list(tree["hosts"], "hosts")):
        w = f"hosts[{i}]"
        h = _mapping(h, w)
        _keys(h, w, {"id", "owner", "cpu_capacity", "mem_capacity"})
        hosts.append(_build(w, MeHost, _str(h, "id", w), _str(h, "owner", w),
                            _num(h, "cpu_capacity", w), _num(h, "mem_capacity", w)))
    links = _links(tree["host_links"], hosts, max_vl)

    chains, overrides = [], {}
    for i, c in enumerate(_list(tree["chains"], "chains")):
        chain, dist = _chain(c, f"chains[{i}]")
        chains.append(chain)
        if dist is not None:
            overrides[chain.id] = dist
    dist = _distribution(tree["user_distribution"], "user_distribution")

    _build("scenario", world, mecsps, hosts, links, weights)
    seen_chains, seen_apps = set(), set()
    for c in chains:
        if c.id in seen_chains:
            raise ScenarioError(f"duplicate chain id {c.id}")
        seen_chains.add(c.id)
        for a in c.app_ids:
            if a in seen_apps:
                raise ScenarioError(f"app id {a} appears in more than one chain")
            seen_apps.add(a)
    known = {m.id for m in mecsps}
    for d in [dist, *overrides.values()]:
        unknown = set(d.shares) - known
        if unknown:
            raise ScenarioError(f"user shares name unknown mecsp(s) {', '.join(sorted(unknown))}")

    return ScenarioConfig(
        tuple(mecsps), tuple(hosts), tuple(links), tuple(chains), dist, weights, max_vl, seed,
        overrides, copy.deepcopy(tree),
    )


def parse_scenario(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ScenarioError(f"{where}: {getattr(exc, 'problem', None) or exc}") from None
    return scenario_from_dict(tree)


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), str(path))


def bundled_scenario(name: str = "table3") -> Path:
    """Path of a scenario shipped with the package."""
    ref = resources.files("edgechain") / "scenarios" / f"{name}.scenario"
    with resources.as_file(ref) as p:
        return Path(p)


# -- sweeps ---------------------------------------------------------------------


_RHS = re.compile(
    r"^\s*(?:(?P<c>[-+]?\d+(?:\.\d*)?)\s*(?P<op>[-+])\s*)?"
    r"(?:(?P<k>\d+(?:\.\d*)?)\s*\*\s*)?x\s*$"
)
_CONST = re.compile(r"^\s*[-+]?\d+(?:\.\d*)?\s*$")


@dataclass(frozen=True)
class Coupling:
    """``path`` follows the swept value as ``offset + slope * x``."""

    path: str
    offset: float
    slope: float

    @classmethod
    def parse(cls, rule: str) -> Coupling:
        if "=" not in rule:
            raise ScenarioError(f"coupling rule {rule!r}: expected <path>=<expression in x>")
        path, rhs = (s.strip() for s in rule.split("=", 1))
        if _CONST.match(rhs):
            return cls(path, float(rhs), 0.0)
        m = _RHS.match(rhs)
        if not m:
            raise ScenarioError(f"coupling rule {rule!r}: unsupported expression {rhs!r}")
        slope = float(m["k"]) if m["k"] else 1.0
        if m["op"] == "-":
            slope = -slope
        return cls(path, float(m["c"]) if m["c"] else 0.0, slope)

    def value(self, x: float) -> float:
        return round(self.offset + self.slope * x, 10)


@dataclass(frozen=True)
class SweepSpec:
    param: str
    start: float
    stop: float
    step: float
    coupled: tuple[Coupling, ...] = ()

    def __post_init__(self):
        if not self.step > 0:
            raise ScenarioError("sweep step must be > 0")
        if self.start > self.stop:
            raise ScenarioError("sweep start must not exceed stop")

    def points(self) -> list[float]:
        n = int(math.floor((self.stop - self.start) / self.step + EPS)) + 1
        return [round(self.start + i * self.step, 10) for i in range(n)]


def set_path(tree: dict, path: str, value: Any) -> None:
    """Assign into a scenario tree; list items are addressed by their ``id``."""
    parts = path.split(".")
    node: Any = tree
    for depth, part in enumerate(parts):
        last = depth == len(parts) - 1
        where = ".".join(parts[: depth + 1])
        if isinstance(node, list):
            match = [i for i, item in enumerate(node) if isinstance(item, dict) and item.get("id") == part]
            if not match:
                if part.isdigit() and int(part) < len(node):
                    match = [int(part)]
                else:
                    raise ScenarioError(f"sweep path {path!r}: no item {where!r}")
            if last:
                node[match[0]] = value
                return
            node = node[match[0]]
        elif isinstance(node, dict):
            if last:
                if part not in node and depth == 0:
                    raise ScenarioError(f"sweep path {path!r}: unknown field {part!r}")
                node[part] = value
                return
            if part not in node:
                raise ScenarioError(f"sweep path {path!r}: no field {where!r}")
            node = node[part]
        else:
            raise ScenarioError(f"sweep path {path!r}: {where!r} is not a container")


def scenario_at(config: ScenarioConfig, spec: SweepSpec, x: float) -> ScenarioConfig:
    tree = copy.deepcopy(config.raw)
    set_path(tree, spec.param, x)
    for c in spec.coupled:
        set_path(tree, c.path, c.value(x))
    return scenario_from_dict(tree)
