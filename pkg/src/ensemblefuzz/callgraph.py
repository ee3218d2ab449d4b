"""Call-graph ingestion and depth analysis.

A call graph is read from a plain edge list (``caller callee`` per line),
function depths are the BFS distance from the entry set, and functions deeper
than ``rho * mean_depth`` (or unreachable) are considered deep.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

DEFAULT_RHO = 1.5

# Sentinel depth for functions not reachable from any entry.
UNREACHABLE = None


class CallGraphError(ValueError):
    pass


@dataclass(frozen=True)
class CallGraph:
    functions: frozenset[str]
    calls: frozenset[tuple[str, str]]
    entries: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        for caller, callee in self.calls:
            if caller not in self.functions or callee not in self.functions:
                raise CallGraphError(f"call {caller} -> {callee} names an unknown function")
        missing = self.entries - self.functions
        if missing:
            raise CallGraphError(f"entry functions not in graph: {sorted(missing)}")

    def with_entries(self, entries: Iterable[str]) -> CallGraph:
        return CallGraph(self.functions, self.calls, frozenset(entries))

    def successors(self) -> dict[str, list[str]]:
        succ: dict[str, list[str]] = {f: [] for f in self.functions}
        for caller, callee in sorted(self.calls):
            succ[caller].append(callee)
        return succ


@dataclass(frozen=True)
class DepthMap:
    depth: Mapping[str, int | None]
    mean_depth: float
    deep_threshold: float
    rho: float = DEFAULT_RHO

    def reachable(self) -> dict[str, int]:
        return {f: d for f, d in self.depth.items() if d is not None}


def _lines(text: str) -> Iterable[tuple[int, list[str]]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line.split()


def parse_callgraph(text: str, entries: Iterable[str] = ()) -> CallGraph:
    functions: set[str] = set()
    calls: set[tuple[str, str]] = set()
    for lineno, tokens in _lines(text):
        if len(tokens) == 1:
            functions.add(tokens[0])
        elif len(tokens) == 2:
            caller, callee = tokens
            functions.update(tokens)
            calls.add((caller, callee))
        else:
            raise CallGraphError(f"line {lineno}: expected 1 or 2 tokens, got {len(tokens)}")
    if not functions:
        raise CallGraphError("empty call graph")
    return CallGraph(frozenset(functions), frozenset(calls), frozenset(entries))


def parse_entries(text: str) -> frozenset[str]:
    names = set()
    for lineno, tokens in _lines(text):
        if len(tokens) != 1:
            raise CallGraphError(f"line {lineno}: entry file takes one function per line")
        names.add(tokens[0])
    return frozenset(names)


def parse_edge_id(token: str) -> int:
    """Edge ids are unsigned 64-bit tokens written in decimal or 0x-hex."""
    value = int(token, 0)
    if not 0 <= value < 2**64:
        raise ValueError(f"edge id out of 64-bit range: {token}")
    return value


def parse_edge_map(text: str) -> dict[int, str]:
    owners: dict[int, str] = {}
    for lineno, tokens in _lines(text):
        if len(tokens) != 2:
            raise CallGraphError(f"line {lineno}: expected 'edge_id function_name'")
        try:
            edge = parse_edge_id(tokens[0])
        except ValueError as exc:
            raise CallGraphError(f"line {lineno}: {exc}") from None
        owners[edge] = tokens[1]
    return owners


def entry_candidates(g: CallGraph) -> frozenset[str]:
    if g.entries:
        return g.entries
    called = {callee for caller, callee in g.calls if caller != callee}
    return frozenset(g.functions - called)


def compute_depths(g: CallGraph, rho: float = DEFAULT_RHO) -> DepthMap:
    if rho <= 0:
        raise ValueError("rho must be positive")
    if not g.functions:
        raise CallGraphError("empty call graph")
    roots = entry_candidates(g)
    if not roots:
        raise CallGraphError("no entry function")

    succ = g.successors()
    depth: dict[str, int | None] = {f: UNREACHABLE for f in g.functions}
    queue = deque(sorted(roots))
    for r in roots:
        depth[r] = 0
    while queue:
        f = queue.popleft()
        for callee in succ[f]:
            if depth[callee] is None:
                depth[callee] = depth[f] + 1
                queue.append(callee)

    reached = [d for d in depth.values() if d is not None]
    mean = sum(reached) / len(reached)
    return DepthMap(depth=depth, mean_depth=mean, deep_threshold=rho * mean, rho=rho)


def deep_functions(d: DepthMap) -> frozenset[str]:
    return frozenset(
        f for f, depth in d.depth.items() if depth is None or depth > d.deep_threshold
    )


def deep_edges(d: DepthMap, edge_owner: Mapping[int, str]) -> frozenset[int]:
    """Edge ids owned by deep functions.

    Owners missing from the call graph are invisible to it, so they are
    treated like unreachable functions.
    """
    deep = deep_functions(d)
    return frozenset(
        edge for edge, fn in edge_owner.items() if fn in deep or fn not in d.depth
    )
