"""Global fuzzing record: edge hit counts, path identities, crash identities.

Digest layout (pinned, documented in README):

* path id: for every covered edge in ascending edge-id order, 8 bytes of the
  little-endian edge id followed by 1 byte of bucket index; the concatenation
  is hashed with BLAKE2b, 16-byte digest.
* crash id: the top three normalized frames joined with ``\\n`` (UTF-8),
  hashed with BLAKE2b, 16-byte digest.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .callgraph import parse_edge_id

CoverageMap = Mapping[int, int]

# Lower bounds of the hit-count classes 1, 2, 3, 4-7, 8-15, 16-31, 32-127, >=128.
BUCKET_FLOORS = (1, 2, 3, 4, 8, 16, 32, 128)
CRASH_FRAMES = 3
DIGEST_SIZE = 16


def bucket(count: int) -> int:
    if count < 1:
        raise ValueError("bucketed counts must be >= 1")
    idx = 0
    for i, floor in enumerate(BUCKET_FLOORS):
        if count >= floor:
            idx = i
    return idx


def _digest(data: bytes) -> str:
    return hashlib.blake2b(data, digest_size=DIGEST_SIZE).hexdigest()


def path_id(coverage: CoverageMap) -> str:
    buf = bytearray()
    for edge in sorted(coverage):
        count = coverage[edge]
        if count <= 0:
            continue
        buf += struct.pack("<QB", edge, bucket(count))
    return _digest(bytes(buf))


_ADDR = re.compile(r"^0x[0-9a-fA-F]+$")


def normalize_frame(frame: str) -> str:
    """Reduce a frame to ``function+offset``, dropping absolute addresses.

    Accepts ``func``, ``func+0x1a``, ``0x7f00 in func+0x1a`` and
    ``#3 0x4005 in func (file.c:12)`` style descriptors.
    """
    tokens = frame.strip().split()
    if tokens and tokens[0].startswith("#") and tokens[0][1:].isdigit():
        tokens = tokens[1:]
    tokens = [t for t in tokens if not _ADDR.match(t)]
    if tokens and tokens[0] == "in":
        tokens = tokens[1:]
    if not tokens:
        return "??"
    head = tokens[0]
    # func(args) -> func
    paren = head.find("(")
    if paren > 0:
        head = head[:paren]
    return head


def crash_id(frames: Sequence[str]) -> str:
    if not frames:
        raise ValueError("crash id needs at least one frame")
    top = [normalize_frame(f) for f in frames[:CRASH_FRAMES]]
    return _digest("\n".join(top).encode())


@dataclass(frozen=True)
class ExecutionResult:
    coverage: Mapping[int, int]
    crashed: bool = False
    stack_frames: tuple[str, ...] = ()
    # set when replaying the seed failed; coverage is then empty
    flagged: bool = False

    def __post_init__(self) -> None:
        if not self.crashed and self.stack_frames:
            raise ValueError("non-crashing result cannot carry stack frames")
        if self.crashed and not self.stack_frames:
            raise ValueError("crashing result needs stack frames")
        if any(c < 0 for c in self.coverage.values()):
            raise ValueError("negative hit count")

    @cached_property
    def edges(self) -> frozenset[int]:
        return frozenset(e for e, c in self.coverage.items() if c > 0)

    @cached_property
    def _path_id(self) -> str:
        return path_id(self.coverage)

    def path_id(self) -> str:
        return self._path_id

    def crash_id(self) -> str | None:
        return crash_id(self.stack_frames) if self.crashed else None


@dataclass(frozen=True)
class MergeDelta:
    new_edges: int = 0
    new_path: bool = False
    new_unique_crash: bool = False


@dataclass
class FuzzRecord:
    global_coverage: dict[int, int] = field(default_factory=dict)
    known_paths: set[str] = field(default_factory=set)
    known_crashes: set[str] = field(default_factory=set)
    crash_total: int = 0

    def copy(self) -> FuzzRecord:
        return FuzzRecord(
            dict(self.global_coverage),
            set(self.known_paths),
            set(self.known_crashes),
            self.crash_total,
        )

    def count(self, edge: int) -> int:
        return self.global_coverage.get(edge, 0)

    def merge(self, result: ExecutionResult) -> MergeDelta:
        new_edges = 0
        for edge, hits in result.coverage.items():
            if hits <= 0:
                continue
            if edge not in self.global_coverage:
                new_edges += 1
                self.global_coverage[edge] = hits
            else:
                self.global_coverage[edge] += hits

        pid = result.path_id()
        new_path = pid not in self.known_paths
        self.known_paths.add(pid)

        new_crash = False
        if result.crashed:
            self.crash_total += 1
            cid = result.crash_id()
            new_crash = cid not in self.known_crashes
            self.known_crashes.add(cid)
        return MergeDelta(new_edges, new_path, new_crash)

    def less_frequent_threshold(self) -> float:
        return less_frequent_threshold(self)

    def stats(self) -> dict[str, int]:
        return {
            "edges": len(self.global_coverage),
            "paths": len(self.known_paths),
            "crashes": len(self.known_crashes),
            "crash_total": self.crash_total,
        }


def merge(m: FuzzRecord, r: ExecutionResult) -> tuple[FuzzRecord, MergeDelta]:
    """Functional form of :meth:`FuzzRecord.merge`; ``m`` is left untouched."""
    out = m.copy()
    delta = out.merge(r)
    return out, delta


def less_frequent_threshold(m: FuzzRecord) -> float:
    counts = m.global_coverage.values()
    if not counts:
        return 0.0
    return 0.5 * sum(counts) / len(counts)


class CoverageFormatError(ValueError):
    pass


def parse_coverage(text: str) -> ExecutionResult:
    """Parse the per-seed coverage interchange format.

    ``edge_id count`` lines, optionally followed by ``CRASH f1;f2;...``.
    Repeated edge ids are summed.
    """
    hits: dict[int, int] = {}
    frames: tuple[str, ...] = ()
    crashed = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("CRASH"):
            if crashed:
                raise CoverageFormatError(f"line {lineno}: duplicate CRASH line")
            crashed = True
            body = line[len("CRASH"):].strip()
            frames = tuple(f.strip() for f in body.split(";") if f.strip()) or ("??",)
            continue
        if crashed:
            raise CoverageFormatError(f"line {lineno}: coverage after CRASH line")
        parts = line.split()
        if len(parts) != 2:
            raise CoverageFormatError(f"line {lineno}: expected 'edge_id count'")
        try:
            edge = parse_edge_id(parts[0])
            count = int(parts[1])
        except ValueError as exc:
            raise CoverageFormatError(f"line {lineno}: {exc}") from None
        if count < 0:
            raise CoverageFormatError(f"line {lineno}: negative count")
        if count:
            hits[edge] = hits.get(edge, 0) + count
    return ExecutionResult(hits, crashed, frames)


def format_coverage(result: ExecutionResult) -> str:
    lines = [f"{edge} {count}" for edge, count in sorted(result.coverage.items()) if count > 0]
    if result.crashed:
        lines.append("CRASH " + ";".join(result.stack_frames))
    return "\n".join(lines) + "\n"


def union_edges(results: Iterable[ExecutionResult]) -> set[int]:
    out: set[int] = set()
    for r in results:
        out |= r.edges
    return out
