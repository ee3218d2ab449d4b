"""Discrete-event backend that stands in for real fuzzer processes.

Every live instance races two exponential clocks: one for discovering an
eligible edge (gate rate > 0, prerequisites already in the instance's group
pool) and one for churn inputs that re-exercise known paths. A discovery is
published to the group pool at once, so sibling instances of the same
fuzzer benefit from it; other groups only see it after the round's sync.
"""

from __future__ import annotations

import math
import random

from ..adapters import AdapterError, AdapterSpec, Backend, InstanceHandle, VirtualClock
from ..record import ExecutionResult
from ..seedpool import Seed, SeedPool
from .scenario import Scenario, make_payload


class _Group:
    def __init__(self, pool: SeedPool, covered: set[int]) -> None:
        self.pool = pool
        self.covered = covered
        # discovered (non-open) edges, in discovery order, for churn picks
        self.found: list[int] = []


class SimBackend(Backend):
    def __init__(self, scenario: Scenario, units: int, round_time: float, seed: int = 0) -> None:
        super().__init__(units, round_time, VirtualClock())
        self.scenario = scenario
        self.seed = seed
        self.round_index = 0
        self._groups: dict[str, _Group] = {}
        self._spawned = 0

    def execute(self, payload: bytes) -> ExecutionResult:
        return self.scenario.execute(payload)

    def begin_round(self, round_index: int, groups: dict[str, SeedPool]) -> None:
        super().begin_round(round_index, groups)
        self._groups = {}
        self._spawned = 0
        self._pool_edges: dict[frozenset[str], set[int]] = {}
        for fuzzer, pool in sorted(groups.items()):
            self._group(fuzzer, pool)

    def _covered(self, pool: SeedPool) -> set[int]:
        # every group starts from a copy of the same global pool
        key = frozenset(pool.seeds)
        covered = self._pool_edges.get(key)
        if covered is None:
            covered = set()
            for seed in pool:
                covered |= self.scenario.execute(seed.payload).edges
            self._pool_edges[key] = covered
        return set(covered)

    def _group(self, fuzzer: str, pool: SeedPool) -> _Group:
        group = self._groups.get(fuzzer)
        if group is None:
            covered = self._covered(pool)
            group = _Group(pool, covered)
            group.found = sorted(covered - self.scenario.open_edges)
            self._groups[fuzzer] = group
            self.groups[fuzzer] = pool
        return group

    # instance control ------------------------------------------------
    def _launch(self, handle: InstanceHandle, spec: AdapterSpec, corpus: SeedPool) -> None:
        profile = self.scenario.profiles.get(spec.name)
        if profile is None:
            raise AdapterError(f"scenario has no profile for fuzzer {spec.name}")
        self._spawned += 1
        group = self._group(spec.name, corpus)
        rng = random.Random(
            f"sim:{self.scenario.seed}:{self.seed}:{self.round_index}:{handle.unit}:{self._spawned}:{spec.name}"
        )
        dry_at = math.inf if profile.dry_after is None else profile.dry_after * self.round_time
        handle.data.update(
            rng=rng, profile=profile, group=group, produced=[], cursor=0,
            dry_at=min(dry_at, handle.start + handle.budget), churned=0,
        )
        self._resample(handle, self.clock.now())
        self._resample_churn(handle, self.clock.now())

    def _terminate(self, handle: InstanceHandle) -> None:
        handle.data["next_find"] = math.inf
        handle.data["next_churn"] = math.inf

    def _collect(self, handle: InstanceHandle) -> list[tuple[Seed, ExecutionResult]]:
        produced = handle.data["produced"]
        now = self.clock.now() if handle.live else handle.end
        out = []
        i = handle.data["cursor"]
        while i < len(produced) and produced[i][0] <= now:
            out.append(produced[i][1:])
            i += 1
        handle.data["cursor"] = i
        return out

    # event loop ------------------------------------------------------
    def _eligible(self, handle: InstanceHandle) -> list[tuple[int, float]]:
        profile = handle.data["profile"]
        covered = handle.data["group"].covered
        out = []
        for e in self.scenario.discoverable:
            if e.id in covered:
                continue
            rate = profile.rate(e.gate)
            if rate > 0 and all(r in covered for r in e.requires):
                out.append((e.id, rate))
        return out

    def _delay(self, handle: InstanceHandle, rate: float) -> float:
        if rate <= 0:
            return math.inf
        if handle.data["profile"].deterministic:
            return 1.0 / rate
        return handle.data["rng"].expovariate(rate)

    def _resample(self, handle: InstanceHandle, now: float) -> None:
        eligible = self._eligible(handle)
        handle.data["eligible"] = eligible
        t = now + self._delay(handle, sum(r for _, r in eligible))
        handle.data["next_find"] = t if t <= handle.data["dry_at"] else math.inf

    def _resample_churn(self, handle: InstanceHandle, now: float) -> None:
        profile = handle.data["profile"]
        t = now + self._delay(handle, profile.churn)
        handle.data["next_churn"] = t if t <= handle.data["dry_at"] else math.inf

    def advance(self, t: float) -> None:
        while True:
            best = None
            for h in self.live_handles():
                for kind in ("next_find", "next_churn"):
                    when = h.data[kind]
                    if when <= t and (best is None or (when, h.unit, kind) < best[:3]):
                        best = (when, h.unit, kind, h)
            if best is None:
                break
            when, _, kind, handle = best
            self.clock.advance_to(when)
            if kind == "next_find":
                self._discover(handle, when)
            else:
                self._churn(handle, when)
        self.clock.advance_to(t)

    def _emit(self, handle: InstanceHandle, when: float, payload: bytes) -> Seed:
        seed = Seed(payload, handle.fuzzer, self.round_index)
        result = self.scenario.execute(payload)
        handle.data["produced"].append((when, seed, result))
        handle.data["group"].pool.add(seed)
        return seed

    def _discover(self, handle: InstanceHandle, when: float) -> None:
        rng: random.Random = handle.data["rng"]
        eligible = handle.data["eligible"]
        x = rng.random() * sum(r for _, r in eligible)
        edge = eligible[-1][0]
        acc = 0.0
        for e, r in eligible:
            acc += r
            if x < acc:
                edge = e
                break
        p = self.scenario.crash_prob.get(edge, 0.0)
        crashed = p > 0 and rng.random() < p
        self._emit(handle, when, make_payload(edge, crashed))
        group: _Group = handle.data["group"]
        group.covered |= self.scenario.closure(edge)
        group.found.append(edge)
        for h in self.live_handles():
            if h.data["group"] is not group:
                continue
            if h is handle or not h.data["profile"].deterministic:
                self._resample(h, when)
            else:
                self._refresh_sibling(h, when)

    def _refresh_sibling(self, handle: InstanceHandle, now: float) -> None:
        """Fixed-interval instances keep their pending find when a sibling
        covers something; re-timing them would starve all but one."""
        eligible = self._eligible(handle)
        handle.data["eligible"] = eligible
        if not eligible:
            handle.data["next_find"] = math.inf
        elif handle.data["next_find"] == math.inf:
            self._resample(handle, now)

    def _churn(self, handle: InstanceHandle, when: float) -> None:
        rng: random.Random = handle.data["rng"]
        profile = handle.data["profile"]
        group: _Group = handle.data["group"]
        by_id = self.scenario.by_id
        skilled = [e for e in group.found if profile.rate(by_id[e].gate) > 0]
        if skilled:
            edge = rng.choice(skilled)
            p = self.scenario.crash_prob.get(edge, 0.0)
            crashed = p > 0 and rng.random() < p
            handle.data["churned"] += 1
            tag = f"{handle.fuzzer}.{self.round_index}.{handle.unit}.{handle.data['churned']}"
            self._emit(handle, when, make_payload(edge, crashed, tag))
        self._resample_churn(handle, when)
