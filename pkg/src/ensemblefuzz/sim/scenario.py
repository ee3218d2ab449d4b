"""Synthetic targets for desk-scale simulation.

A scenario is a set of edges, each behind a gate (``FORMAT``, ``LOOP``,
``MAGIC``, ``SOLVER``...) and optionally behind prerequisite edges, plus a
call graph, an edge->function map, crash sites and per-fuzzer discovery
rates per gate.

Seeds produced by the simulator have textual payloads understood by
:meth:`Scenario.execute`:

* ``sim:<edge>`` reaches ``edge`` and every edge it depends on;
* ``sim:<edge>:crash`` additionally crashes at ``edge``;
* a ``#<tag>`` suffix marks a distinct input exercising the same path.

Anything else (including the empty seed) covers only the open edges.
"""

from __future__ import annotations

import random
from graphlib import CycleError, TopologicalSorter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from ..callgraph import CallGraph
from ..record import ExecutionResult

OPEN = "OPEN"
GATES = (OPEN, "FORMAT", "LOOP", "MAGIC", "SOLVER")


_TABLES = {"scenario", "callgraph", "edges", "crashes", "profiles", "defaults"}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class EdgeSpec:
    id: int
    gate: str
    function: str
    requires: tuple[int, ...] = ()
    hits: int = 1


@dataclass(frozen=True)
class Profile:
    name: str
    rates: Mapping[str, float] = field(default_factory=dict)
    # rate of non-novel inputs re-exercising paths the fuzzer is good at
    churn: float = 0.0
    # fraction of the round after which the fuzzer produces nothing
    dry_after: float | None = None
    # fixed inter-discovery times instead of exponential draws
    deterministic: bool = False

    def rate(self, gate: str) -> float:
        return float(self.rates.get(gate, 0.0))


@dataclass(frozen=True)
class CrashSite:
    edge: int
    probability: float = 1.0


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    edges: tuple[EdgeSpec, ...]
    calls: tuple[tuple[str, str], ...]
    entries: tuple[str, ...]
    profiles: Mapping[str, Profile]
    crashes: tuple[CrashSite, ...] = ()
    # suggested campaign settings (fuzz_rounds, units) for this scenario
    defaults: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = [e.id for e in self.edges]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate edge ids")
        known = set(ids)
        for e in self.edges:
            if e.hits < 1:
                raise ScenarioError(f"edge {e.id}: hits must be >= 1")
            missing = set(e.requires) - known
            if missing:
                raise ScenarioError(f"edge {e.id} requires unknown edges {sorted(missing)}")
        for p in self.profiles.values():
            if any(r < 0 for r in p.rates.values()) or p.churn < 0:
                raise ScenarioError(f"profile {p.name}: rates must be >= 0")
            if p.dry_after is not None and not 0 <= p.dry_after <= 1:
                raise ScenarioError(f"profile {p.name}: dry_after must be in [0, 1]")
        for c in self.crashes:
            if c.edge not in known:
                raise ScenarioError(f"crash site {c.edge} is not an edge")
            if not 0 <= c.probability <= 1:
                raise ScenarioError(f"crash site {c.edge}: probability outside [0, 1]")
        self._check_acyclic()
        CallGraph(
            frozenset(self.functions), frozenset(self.calls), frozenset(self.entries)
        )

    def _check_acyclic(self) -> None:
        sorter = TopologicalSorter({e.id: e.requires for e in self.edges})
        try:
            sorter.prepare()
        except CycleError as exc:
            raise ScenarioError(f"edge prerequisites form a cycle: {exc.args[1]}") from None

    # derived views ---------------------------------------------------
    @cached_property
    def by_id(self) -> dict[int, EdgeSpec]:
        return {e.id: e for e in self.edges}

    @cached_property
    def functions(self) -> set[str]:
        fns = {e.function for e in self.edges} | set(self.entries)
        for a, b in self.calls:
            fns.update((a, b))
        return fns

    @cached_property
    def open_edges(self) -> frozenset[int]:
        return frozenset(e.id for e in self.edges if e.gate == OPEN and not e.requires)

    @cached_property
    def discoverable(self) -> tuple[EdgeSpec, ...]:
        return tuple(e for e in self.edges if e.id not in self.open_edges)

    @cached_property
    def crash_prob(self) -> dict[int, float]:
        return {c.edge: c.probability for c in self.crashes}

    def callgraph(self) -> CallGraph:
        return CallGraph(frozenset(self.functions), frozenset(self.calls), frozenset(self.entries))

    def edge_map(self) -> dict[int, str]:
        return {e.id: e.function for e in self.edges}

    def closure(self, edge: int) -> frozenset[int]:
        return self._closure(edge)

    @cached_property
    def _closure_cache(self) -> dict[int, frozenset[int]]:
        return {}

    def _closure(self, edge: int) -> frozenset[int]:
        cache = self._closure_cache
        if edge in cache:
            return cache[edge]
        out = {edge}
        for req in self.by_id[edge].requires:
            out |= self._closure(req)
        result = frozenset(out) | self.open_edges
        cache[edge] = result
        return result

    def crash_frames(self, edge: int) -> tuple[str, ...]:
        fn = self.by_id[edge].function
        return (f"crash_site_{edge}+0x{edge % 4096:x}", f"{fn}+0x{(edge * 31) % 4096:x}", "main+0x10")

    @cached_property
    def _executions(self) -> dict[bytes, ExecutionResult]:
        return {}

    def execute(self, payload: bytes) -> ExecutionResult:
        """Deterministic replay; results are memoized per payload."""
        cached = self._executions.get(payload)
        if cached is None:
            cached = self._executions[payload] = self._execute(payload)
        return cached

    def _execute(self, payload: bytes) -> ExecutionResult:
        target, crashed = _parse_payload(payload)
        if target is None or target not in self.by_id:
            edges = self.open_edges
            crashed = False
        else:
            edges = self.closure(target)
        coverage = {e: self.by_id[e].hits for e in edges}
        if crashed:
            return ExecutionResult(coverage, True, self.crash_frames(target))
        return ExecutionResult(coverage)

    # serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        profiles = {}
        for name, p in sorted(self.profiles.items()):
            entry: dict = {"rates": dict(sorted(p.rates.items())), "churn": p.churn,
                           "deterministic": p.deterministic}
            if p.dry_after is not None:
                entry["dry_after"] = p.dry_after
            profiles[name] = entry
        return {
            "scenario": {"name": self.name, "seed": self.seed},
            "callgraph": {"entries": list(self.entries), "calls": [list(c) for c in self.calls]},
            "edges": [
                {"id": e.id, "gate": e.gate, "function": e.function,
                 "requires": list(e.requires), "hits": e.hits}
                for e in self.edges
            ],
            "crashes": [{"edge": c.edge, "probability": c.probability} for c in self.crashes],
            "profiles": profiles,
            "defaults": dict(sorted(self.defaults.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> Scenario:
        unknown = set(data) - _TABLES
        if unknown:
            raise ScenarioError(f"unknown scenario tables {sorted(unknown)}")
        try:
            head = data.get("scenario", {})
            cg = data.get("callgraph", {})
            edges = tuple(
                EdgeSpec(int(e["id"]), str(e.get("gate", OPEN)), str(e["function"]),
                         tuple(int(r) for r in e.get("requires", ())), int(e.get("hits", 1)))
                for e in data.get("edges", ())
            )
            profiles = {
                name: Profile(name, {str(k): float(v) for k, v in p.get("rates", {}).items()},
                              float(p.get("churn", 0.0)),
                              None if p.get("dry_after") is None else float(p["dry_after"]),
                              bool(p.get("deterministic", False)))
                for name, p in data.get("profiles", {}).items()
            }
            crashes = tuple(
                CrashSite(int(c["edge"]), float(c.get("probability", 1.0)))
                for c in data.get("crashes", ())
            )
            return cls(
                name=str(head.get("name", "scenario")),
                seed=int(head.get("seed", 0)),
                edges=edges,
                calls=tuple((str(a), str(b)) for a, b in cg.get("calls", ())),
                entries=tuple(str(x) for x in cg.get("entries", ())),
                profiles=profiles,
                crashes=crashes,
                defaults={str(k): int(v) for k, v in data.get("defaults", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"malformed scenario: {exc}") from exc

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        import json

        return Scenario.from_dict(json.loads(text))
    return loads_scenario(text)


def loads_scenario(text: str) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"scenario is not valid TOML: {exc}") from exc
    return Scenario.from_dict(data)


def _parse_payload(payload: bytes) -> tuple[int | None, bool]:
    if not payload.startswith(b"sim:"):
        return None, False
    body = payload[4:].split(b"#", 1)[0]
    parts = body.split(b":")
    try:
        edge = int(parts[0])
    except ValueError:
        return None, False
    return edge, len(parts) > 1 and parts[1] == b"crash"


def make_payload(edge: int, crashed: bool = False, tag: str | None = None) -> bytes:
    body = f"sim:{edge}" + (":crash" if crashed else "")
    if tag is not None:
        body += f"#{tag}"
    return body.encode()


# ---------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class RegionSpec:
    """A run of edges behind one gate.

    ``after`` names the region whose edges must be reached first; the region
    entry requires a random edge of that region. ``depth`` is the call depth
    of the region's first function; each region owns ``functions`` functions
    chained below that depth.
    """

    name: str
    gate: str
    edges: int
    after: str | None = None
    depth: int = 1
    functions: int = 2
    hits: tuple[int, int] = (1, 4)
    crash_sites: int = 0
    crash_probability: float = 0.5


@dataclass(frozen=True)
class ScenarioParams:
    name: str
    regions: Sequence[RegionSpec]
    profiles: Sequence[Profile]
    open_edges: int = 8
    open_hits: tuple[int, int] = (20, 60)
    branching: float = 0.35


def gen_scenario(params: ScenarioParams, seed: int) -> Scenario:
    """Build a scenario deterministically from ``params`` and ``seed``.

    Within a region every edge after the first requires one earlier edge of
    the same region (a random tree), so progress is incremental.
    """
    names = [r.name for r in params.regions]
    if len(set(names)) != len(names):
        raise ScenarioError("region names must be unique")
    if not params.profiles:
        raise ScenarioError("need at least one fuzzer profile")
    for r in params.regions:
        if r.edges < 1 or r.functions < 1 or r.depth < 1:
            raise ScenarioError(f"region {r.name}: edges, functions and depth must be >= 1")
        if r.after is not None and r.after not in names:
            raise ScenarioError(f"region {r.name} follows unknown region {r.after}")
        if r.after is not None and names.index(r.after) >= names.index(r.name):
            raise ScenarioError(f"region {r.name} must be listed after {r.after}")
        if r.crash_sites > r.edges:
            raise ScenarioError(f"region {r.name}: more crash sites than edges")
        if r.gate not in GATES:
            raise ScenarioError(f"region {r.name}: unknown gate {r.gate}")

    rng = random.Random(f"scenario:{params.name}:{seed}")
    edges: list[EdgeSpec] = []
    calls: set[tuple[str, str]] = set()
    crashes: list[CrashSite] = []
    next_id = 1

    open_ids = []
    for _ in range(params.open_edges):
        edges.append(EdgeSpec(next_id, OPEN, "main", (), rng.randint(*params.open_hits)))
        open_ids.append(next_id)
        next_id += 1

    region_edges: dict[str, list[int]] = {}
    region_fns: dict[str, list[str]] = {}
    region_depth: dict[str, int] = {}
    for r in params.regions:
        # call chain: main -> r_hub_1 -> ... -> first region function at r.depth
        parent = "main" if r.after is None else region_fns[r.after][0]
        parent_depth = 0 if r.after is None else region_depth[r.after]
        chain_parent = parent
        for level in range(parent_depth + 1, r.depth):
            hub = f"{r.name.lower()}_hub{level}"
            calls.add((chain_parent, hub))
            chain_parent = hub
        fns = [f"{r.name.lower()}_f{i}" for i in range(r.functions)]
        calls.add((chain_parent, fns[0]))
        for a, b in zip(fns, fns[1:]):
            calls.add((a, b))
        region_fns[r.name] = fns
        region_depth[r.name] = max(r.depth, parent_depth + 1)

        ids: list[int] = []
        for i in range(r.edges):
            if i == 0:
                anchor = rng.choice(region_edges[r.after]) if r.after else None
                requires = (anchor,) if anchor is not None else ()
            else:
                # bias towards recent edges so regions grow deep, not wide
                lo = max(0, int(len(ids) * (1 - params.branching)) - 1)
                requires = (ids[rng.randint(lo, len(ids) - 1)],)
            fn = fns[min(r.functions - 1, i * r.functions // r.edges)]
            edges.append(EdgeSpec(next_id, r.gate, fn, requires, rng.randint(*r.hits)))
            ids.append(next_id)
            next_id += 1
        region_edges[r.name] = ids
        for site in rng.sample(ids[1:] or ids, min(r.crash_sites, len(ids[1:] or ids))):
            crashes.append(CrashSite(site, r.crash_probability))

    crashes.sort(key=lambda c: c.edge)
    return Scenario(
        name=params.name,
        seed=seed,
        edges=tuple(edges),
        calls=tuple(sorted(calls)),
        entries=("main",),
        profiles={p.name: p for p in params.profiles},
        crashes=tuple(crashes),
    )
