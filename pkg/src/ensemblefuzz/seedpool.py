"""Global and local seed pools, round-boundary sync and same-fuzzer groups."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Collection, Iterable, Iterator, Mapping, Sequence

from .record import ExecutionResult, FuzzRecord
from .scheduler import Schedule
from .seedeval import ALL_METRICS, is_beneficial

INITIAL = None  # origin of seeds supplied before the campaign


def seed_digest(payload: bytes) -> str:
    return hashlib.blake2b(payload, digest_size=16).hexdigest()


@dataclass(frozen=True)
class Seed:
    payload: bytes
    origin: str | None = INITIAL
    round_found: int = 0

    @property
    def id(self) -> str:
        return seed_digest(self.payload)


@dataclass
class SeedPool:
    seeds: dict[str, Seed] = field(default_factory=dict)

    @classmethod
    def of(cls, seeds: Iterable[Seed]) -> SeedPool:
        pool = cls()
        for s in seeds:
            pool.add(s)
        return pool

    def add(self, seed: Seed) -> bool:
        """Insert unless a seed with the same payload is present."""
        if seed.id in self.seeds:
            return False
        self.seeds[seed.id] = seed
        return True

    def copy(self) -> SeedPool:
        return SeedPool(dict(self.seeds))

    def __len__(self) -> int:
        return len(self.seeds)

    def __iter__(self) -> Iterator[Seed]:
        return iter(self.seeds[k] for k in sorted(self.seeds))

    def __contains__(self, item: object) -> bool:
        key = item.id if isinstance(item, Seed) else item
        return key in self.seeds

    def ids(self) -> set[str]:
        return set(self.seeds)


def init_locals(global_pool: SeedPool, schedule: Schedule) -> dict[str, SeedPool]:
    """One pool per scheduled fuzzer, shared by all of its instances."""
    return {f: global_pool.copy() for f in schedule.fuzzers()}


def group_sync(schedule: Schedule, at: float = 0.0) -> dict[str, frozenset[int]]:
    """Partition units by the fuzzer holding them at round fraction ``at``."""
    groups: dict[str, set[int]] = {}
    for unit in sorted(schedule.assignment):
        groups.setdefault(schedule.holder(unit, at), set()).add(unit)
    return {f: frozenset(units) for f, units in sorted(groups.items())}


Harvest = Sequence[tuple[Seed, ExecutionResult]]


def sync_up(
    global_pool: SeedPool,
    record: FuzzRecord,
    locals_: Mapping[str, Harvest],
    deep: Collection[int],
    metrics: Collection[int] = ALL_METRICS,
) -> tuple[SeedPool, FuzzRecord, list[Seed]]:
    """Upload beneficial seeds and fold every execution into the record.

    Benefit is judged against the record as it stood before this sync, so
    the order in which fuzzers are visited does not matter.
    """
    snapshot = record.copy()
    uploaded: list[Seed] = []
    for fuzzer in sorted(locals_):
        for seed, result in locals_[fuzzer]:
            if is_beneficial(result, snapshot, deep, metrics) and global_pool.add(seed):
                uploaded.append(seed)
    for fuzzer in sorted(locals_):
        for _, result in locals_[fuzzer]:
            record.merge(result)
    return global_pool, record, uploaded
