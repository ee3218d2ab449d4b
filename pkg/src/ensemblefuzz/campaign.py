"""Campaign coordinator: the round loop, mid-round fine-tuning and reporting."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Collection, Iterable, Mapping

from .adapters import AdapterError, AdapterSpec, Backend, InstanceHandle, Target, VirtualClock
from .callgraph import DEFAULT_RHO
from .policies import RULES, Policy, plan_round
from .record import ExecutionResult, FuzzRecord
from .report import CampaignReport, RoundLog, RoundLogWriter
from .scheduler import Schedule, SchedulerState, feedback_rewards, retarget
from .seedeval import QUALITATIVE, evaluate_pool, is_beneficial, reward, tune_weights
from .seedpool import Seed, SeedPool, init_locals, sync_up

logger = logging.getLogger(__name__)

ROUND_TIME = 600.0
MONITOR_TIME = 30.0
FUZZ_ROUNDS = 72


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CampaignConfig:
    round_time: float = ROUND_TIME
    monitor_time: float = MONITOR_TIME
    fuzz_rounds: int = FUZZ_ROUNDS
    units: int = 6
    rho: float = DEFAULT_RHO
    seed: int = 0
    policy: Policy = Policy.LEGION
    prep_fraction: float = 0.5
    grace: float = 5.0
    # process mode
    adapters: Mapping[str, AdapterSpec] = field(default_factory=dict)
    target: Target | None = None
    callgraph: str | None = None
    entries: str | None = None
    edge_map: str | None = None
    seeds_dir: str | None = None
    workdir: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "policy", Policy.parse(str(getattr(self.policy, "value", self.policy))))
        if self.round_time <= 0:
            raise ConfigError("round_time must be positive")
        if not 0 < self.monitor_time < self.round_time / 2:
            raise ConfigError("monitor_time must be positive and below round_time / 2")
        if self.units < 1:
            raise ConfigError("units must be >= 1")
        if self.fuzz_rounds < 1:
            raise ConfigError("fuzz_rounds must be >= 1")
        if self.rho <= 0:
            raise ConfigError("rho must be positive")
        if not 0.5 <= self.prep_fraction < 1:
            raise ConfigError("prep_fraction must be in [0.5, 1)")

    @classmethod
    def with_budget(cls, total_budget: float, **kw) -> CampaignConfig:
        round_time = kw.get("round_time", ROUND_TIME)
        rounds = int(total_budget // round_time)
        if rounds < 1:
            raise ConfigError("total budget is shorter than one round")
        return cls(fuzz_rounds=rounds, **kw)

    def echo(self) -> dict:
        out = {
            "round_time": self.round_time,
            "monitor_time": self.monitor_time,
            "fuzz_rounds": self.fuzz_rounds,
            "units": self.units,
            "rho": self.rho,
            "seed": self.seed,
            "policy": self.policy.value,
            "prep_fraction": self.prep_fraction,
        }
        if self.adapters:
            out["adapters"] = {n: s.to_dict() for n, s in sorted(self.adapters.items())}
        if self.target is not None:
            out["target"] = {"path": self.target.path, "runner": self.target.runner}
        for key in ("callgraph", "entries", "edge_map", "seeds_dir"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out

    def but(self, **changes) -> CampaignConfig:
        return replace(self, **changes)


@dataclass
class RoundOutcome:
    harvest: dict[str, list[tuple[Seed, ExecutionResult]]]
    pulls: dict[str, float]
    schedule: Schedule
    early_terminated: bool
    end_time: float
    # (fuzzer, unit, start, end) for every instance that ran
    intervals: list[tuple[str, int, float, float]]
    # simulated / wall time of every monitoring action
    monitor_times: list[float] = field(default_factory=list)


class Campaign:
    """Runs one campaign against a backend.

    ``deep`` is the set of deep edge ids. ``on_round`` is called with each
    finished :class:`RoundLog`.
    """

    def __init__(
        self,
        config: CampaignConfig,
        backend: Backend,
        specs: Mapping[str, AdapterSpec],
        deep: Collection[int],
        initial_seeds: Iterable[Seed] = (),
        log_writer: RoundLogWriter | None = None,
        on_round: Callable[[RoundLog], None] | None = None,
        extra_echo: Mapping | None = None,
    ) -> None:
        if not specs:
            raise ConfigError("no fuzzers configured")
        self.config = config
        self.backend = backend
        self.specs = dict(specs)
        self.fuzzers = sorted(specs)
        self.deep = frozenset(deep)
        self.rules = RULES[config.policy]
        self.rng = random.Random(f"policy:{config.seed}")
        self.state = SchedulerState.initial(self.fuzzers)
        self.record = FuzzRecord()
        seeds = list(initial_seeds) or [Seed(b"")]
        self.global_pool = SeedPool.of(seeds)
        self.logs: list[RoundLog] = []
        self.outcomes: list[RoundOutcome] = []
        # every (seed id, result) folded into the record, for audits
        self.executions: list[tuple[str, ExecutionResult]] = []
        self.log_writer = log_writer
        self.on_round = on_round
        self.extra_echo = dict(extra_echo or {})

    # -----------------------------------------------------------------
    def run(self) -> CampaignReport:
        for seed in self.global_pool:
            result = self.backend.execute(seed.payload)
            self.record.merge(result)
            self.executions.append((seed.id, result))
        initial_stats = self._stats()
        echo = {**self.config.echo(), **self.extra_echo}
        clock = "virtual" if isinstance(self.backend.clock, VirtualClock) else "wall"
        skeleton = CampaignReport(echo, self.fuzzers, initial_stats, [], 0.0, clock)
        if self.log_writer:
            self.log_writer.header(skeleton.header())
        write_global = getattr(self.backend, "write_global", None)
        if write_global:
            write_global(self.global_pool)

        total = 0.0
        for k in range(1, self.config.fuzz_rounds + 1):
            log = self.step(k)
            total += log.duration
            if self.log_writer:
                self.log_writer.round(log)
            if self.on_round:
                self.on_round(log)
            if write_global:
                write_global(self.global_pool)
        if self.log_writer:
            self.log_writer.footer(total)
        return post_fuzz(self.global_pool, self.record, skeleton, self.logs, total)

    def step(self, k: int) -> RoundLog:
        cfg = self.config
        schedule = plan_round(cfg.policy, self.state, self.fuzzers, cfg.units, self.rng, k)
        units_held = schedule.units_by_fuzzer()
        snapshot = self.record.copy()
        outcome = self.run_round(k, schedule, snapshot)
        self.outcomes.append(outcome)

        ran = sorted(outcome.pulls)
        metrics = {
            f: evaluate_pool([r for _, r in outcome.harvest.get(f, [])], snapshot, self.deep).masked(
                self.rules.metrics
            )
            for f in ran
        }
        theta = tune_weights(metrics, self.rules.metrics) if metrics else (0.0,) * 5
        rewards = {f: reward(metrics[f], theta) for f in ran}
        if self.rules.learns:
            feedback_rewards(self.state, rewards, outcome.pulls)
        self.state.pending.clear()

        harvested = {f: outcome.harvest.get(f, []) for f in sorted(outcome.harvest)}
        self.global_pool, self.record, uploaded = sync_up(
            self.global_pool, self.record, harvested, self.deep, self.rules.metrics
        )
        crashes: dict[str, dict] = {}
        for f in sorted(harvested):
            for seed, result in harvested[f]:
                self.executions.append((seed.id, result))
                if result.crashed:
                    b = crashes.setdefault(result.crash_id(), {"frames": list(result.stack_frames), "seeds": []})
                    if seed.id not in b["seeds"]:
                        b["seeds"].append(seed.id)

        log = RoundLog(
            round=k,
            assignment=dict(schedule.assignment),
            kinds=dict(schedule.kinds),
            reassignments=[
                {"at": m.at, "unit": m.unit, "from": m.from_fuzzer, "to": m.to_fuzzer}
                for m in schedule.reassignments
            ],
            units_held=units_held,
            metrics={f: list(metrics[f]) for f in ran},
            rewards=rewards,
            pulls=dict(outcome.pulls),
            shares={f: outcome.pulls[f] / cfg.units for f in ran},
            theta=list(theta),
            scheduler={
                "n_total": self.state.n_total,
                "evals": {f: {"gamma": e.gamma, "t": e.t} for f, e in sorted(self.state.evals.items())},
            },
            stats=self._stats(),
            early_terminated=outcome.early_terminated,
            duration=outcome.end_time,
            uploaded=sorted(s.id for s in uploaded),
            crashes=crashes,
        )
        self.logs.append(log)
        return log

    def _stats(self) -> dict[str, int]:
        return {**self.record.stats(), "global_pool": len(self.global_pool)}

    # -----------------------------------------------------------------
    def monitor_ticks(self) -> list[float]:
        cfg = self.config
        if self.rules.prep_focus:
            return [cfg.prep_fraction * cfg.round_time]
        if not self.rules.fine_tune:
            return []
        ticks = []
        t = cfg.round_time / 2
        while t < cfg.round_time - 1e-9:
            ticks.append(t)
            t += cfg.monitor_time
        return ticks

    def run_round(self, k: int, schedule: Schedule, snapshot: FuzzRecord) -> RoundOutcome:
        cfg = self.config
        T = cfg.round_time
        backend = self.backend
        groups = init_locals(self.global_pool, schedule)
        backend.begin_round(k, groups)

        harvest: dict[str, list[tuple[Seed, ExecutionResult]]] = {}
        intervals: list[tuple[str, int, float, float]] = []
        handles: dict[int, InstanceHandle | None] = {}
        for unit in sorted(schedule.assignment):
            handles[unit] = self._spawn(schedule.assignment[unit], unit, backend.groups, harvest)

        def finish(h: InstanceHandle) -> None:
            backend.stop(h)
            harvest.setdefault(h.fuzzer, []).extend(backend.harvest(h))
            intervals.append((h.fuzzer, h.unit, h.start, h.end))

        early = False
        end_time = T
        monitor_times: list[float] = []
        for tick in self.monitor_ticks():
            window = tick - cfg.monitor_time
            if not monitor_times and not self.rules.prep_focus and window > 0:
                # plain collection so the first check only sees the last window
                backend.advance(window)
                for h in handles.values():
                    if h is not None:
                        harvest.setdefault(h.fuzzer, []).extend(backend.harvest(h))
            backend.advance(tick)
            monitor_times.append(tick)
            productive: dict[int, bool] = {}
            for unit, h in handles.items():
                if h is None:
                    productive[unit] = False
                    continue
                got = backend.harvest(h)
                harvest.setdefault(h.fuzzer, []).extend(got)
                productive[unit] = h.live and any(
                    is_beneficial(r, snapshot, self.deep, self.rules.metrics) for _, r in got
                )

            if self.rules.prep_focus:
                best = self._best(harvest, snapshot)
                for unit in sorted(handles):
                    h = handles[unit]
                    if h is not None and h.live and h.fuzzer == best:
                        continue
                    if h is not None:
                        finish(h)
                    schedule.reassign(tick / T, unit, best)
                    handles[unit] = self._spawn(best, unit, backend.groups, harvest)
                continue

            round_rewards = self._qualitative_rewards(harvest, snapshot)
            running = {handles[u].fuzzer for u, ok in productive.items() if ok}
            if not running:
                for h in handles.values():
                    if h is not None:
                        finish(h)
                handles = {u: None for u in handles}
                early = True
                end_time = tick
                break
            held: dict[str, int] = {}
            for h in handles.values():
                if h is not None and h.live:
                    held[h.fuzzer] = held.get(h.fuzzer, 0) + 1
            for unit in sorted(u for u, ok in productive.items() if not ok):
                target = retarget(round_rewards, running, held)
                h = handles[unit]
                if h is not None and h.live and h.fuzzer == target:
                    continue
                if h is not None:
                    if h.live:
                        held[h.fuzzer] -= 1
                    finish(h)
                schedule.reassign(tick / T, unit, target)
                handles[unit] = self._spawn(target, unit, backend.groups, harvest)
                if handles[unit] is not None:
                    held[target] = held.get(target, 0) + 1

        if not early:
            backend.advance(T)
            for h in handles.values():
                if h is not None:
                    finish(h)

        pulls: dict[str, float] = {}
        for fuzzer, _, start, end in intervals:
            held_for = (min(end, end_time) - start) / T
            if held_for > 0:
                pulls[fuzzer] = pulls.get(fuzzer, 0.0) + held_for
        return RoundOutcome(harvest, pulls, schedule, early, end_time, intervals, monitor_times)

    def _spawn(self, fuzzer: str, unit: int, groups: dict[str, SeedPool], harvest: dict) -> InstanceHandle | None:
        pool = groups.get(fuzzer)
        if pool is None:
            pool = groups[fuzzer] = self.global_pool.copy()
        harvest.setdefault(fuzzer, [])
        try:
            return self.backend.spawn(self.specs[fuzzer], unit, pool, self.config.round_time)
        except AdapterError as exc:
            logger.warning("instance of %s on unit %d failed to start: %s", fuzzer, unit, exc)
            return None

    def _qualitative_rewards(self, harvest, snapshot: FuzzRecord) -> dict[str, float]:
        return {
            f: reward(
                evaluate_pool([r for _, r in got], snapshot, self.deep).masked(self.rules.metrics),
                QUALITATIVE,
            )
            for f, got in harvest.items()
        }

    def _best(self, harvest, snapshot: FuzzRecord) -> str:
        rewards = self._qualitative_rewards(harvest, snapshot)
        candidates = sorted(harvest) or self.fuzzers
        return min(candidates, key=lambda f: (-rewards.get(f, 0.0), f))


def post_fuzz(
    global_pool: SeedPool,
    record: FuzzRecord,
    skeleton: CampaignReport,
    logs: list[RoundLog],
    duration: float,
) -> CampaignReport:
    report = CampaignReport(
        skeleton.config, skeleton.fuzzers, skeleton.initial_stats, list(logs), duration, skeleton.clock
    )
    totals = report.totals
    expected = {**record.stats(), "global_pool": len(global_pool)}
    if totals != expected:
        raise RuntimeError(f"report totals {totals} disagree with the record {expected}")
    return report
