"""Base-fuzzer adapter contract and the process-mode backend.

A backend starts fuzzer instances on resource units, harvests the seeds they
produce (paired with a replayed execution result) and stops them. Both the
process backend here and the simulated backend in :mod:`ensemblefuzz.sim`
share the unit bookkeeping of :class:`Backend`.
"""

from __future__ import annotations

import logging
import os
import shlex
import signal
import subprocess
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from glob import glob
from pathlib import Path
from typing import Iterable

from .record import CoverageFormatError, ExecutionResult, parse_coverage
from .seedpool import Seed, SeedPool

logger = logging.getLogger(__name__)

GRACE_PERIOD = 5.0
EXIT_RAN = 0
EXIT_CRASHED = 77
PLACEHOLDERS = ("{target}", "{in}", "{out}")


class AdapterError(RuntimeError):
    pass


class Kind(str, Enum):
    PROCESS = "process"
    SIMULATED = "simulated"


@dataclass(frozen=True)
class AdapterSpec:
    name: str
    kind: Kind = Kind.SIMULATED
    cmd: str = ""
    seeds_glob: str = "queue/*"
    crashes_glob: str = "crashes/*"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        if not self.name or any(c in self.name for c in "/\\ "):
            raise AdapterError(f"invalid fuzzer name {self.name!r}")
        if self.kind is Kind.PROCESS:
            for ph in PLACEHOLDERS:
                n = self.cmd.count(ph)
                if n != 1:
                    raise AdapterError(
                        f"adapter {self.name}: placeholder {ph} must appear exactly once in cmd, found {n}"
                    )

    @classmethod
    def from_dict(cls, name: str, data: dict) -> AdapterSpec:
        known = {"name", "kind", "cmd", "seeds_glob", "crashes_glob"}
        unknown = set(data) - known
        if unknown:
            raise AdapterError(f"adapter {name}: unknown fields {sorted(unknown)}")
        fields = {k: v for k, v in data.items() if k != "name"}
        return cls(name=data.get("name", name), **fields)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "cmd": self.cmd,
            "seeds_glob": self.seeds_glob,
            "crashes_glob": self.crashes_glob,
        }


LIVE = "live"
STOPPED = "stopped"
DEAD = "dead"  # exited on its own


@dataclass(eq=False)
class InstanceHandle:
    fuzzer: str
    unit: int
    start: float
    budget: float
    state: str = LIVE
    end: float | None = None
    # backend-private data
    data: dict = field(default_factory=dict, repr=False)

    @property
    def live(self) -> bool:
        return self.state == LIVE


class VirtualClock:
    def __init__(self) -> None:
        self._now = 0.0

    def now(self) -> float:
        return self._now

    def reset(self) -> None:
        self._now = 0.0

    def advance_to(self, t: float) -> None:
        if t < self._now:
            raise ValueError("virtual clock cannot go backwards")
        self._now = t


class WallClock:
    def __init__(self) -> None:
        self._origin = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._origin

    def reset(self) -> None:
        self._origin = time.monotonic()

    def advance_to(self, t: float) -> None:
        delay = t - self.now()
        if delay > 0:
            time.sleep(delay)


class Backend:
    """Unit bookkeeping shared by every backend.

    Subclasses implement ``_launch``, ``_collect``, ``_terminate`` and
    optionally ``begin_round``/``advance``/``end_round``.
    """

    def __init__(self, units: int, round_time: float, clock) -> None:
        self.units = units
        self.round_time = round_time
        self.clock = clock
        self.occupied: dict[int, InstanceHandle] = {}

    # round lifecycle -------------------------------------------------
    def begin_round(self, round_index: int, groups: dict[str, SeedPool]) -> None:
        self.clock.reset()
        self.round_index = round_index
        self.groups = groups

    def advance(self, t: float) -> None:
        self.clock.advance_to(t)

    def end_round(self) -> None:
        for handle in list(self.occupied.values()):
            self.stop(handle)

    # instance control ------------------------------------------------
    def spawn(self, spec: AdapterSpec, unit: int, corpus: SeedPool, budget: float) -> InstanceHandle:
        if not 0 <= unit < self.units:
            raise AdapterError(f"unit {unit} out of range")
        holder = self.occupied.get(unit)
        if holder is not None:
            self._refresh(holder)
            if holder.live:
                raise AdapterError(f"unit {unit} is occupied by {holder.fuzzer}")
        handle = InstanceHandle(spec.name, unit, self.clock.now(), budget)
        self.occupied[unit] = handle
        try:
            self._launch(handle, spec, corpus)
        except Exception:
            handle.state = DEAD
            handle.end = handle.start
            self.occupied.pop(unit, None)
            raise
        return handle

    def harvest(self, handle: InstanceHandle) -> list[tuple[Seed, ExecutionResult]]:
        if handle.data.get("drained"):
            return []
        self._refresh(handle)
        out = self._collect(handle)
        if not handle.live:
            handle.data["drained"] = True
        return out

    def stop(self, handle: InstanceHandle) -> float:
        if handle.live:
            self._refresh(handle)
        if handle.live:
            self._terminate(handle)
            handle.state = STOPPED
            handle.end = min(self.clock.now(), handle.start + handle.budget)
        if self.occupied.get(handle.unit) is handle:
            del self.occupied[handle.unit]
        return (handle.end - handle.start) / self.round_time

    def live_handles(self) -> list[InstanceHandle]:
        return [h for _, h in sorted(self.occupied.items()) if h.live]

    # subclass hooks --------------------------------------------------
    def _launch(self, handle: InstanceHandle, spec: AdapterSpec, corpus: SeedPool) -> None:
        raise NotImplementedError

    def _collect(self, handle: InstanceHandle) -> list[tuple[Seed, ExecutionResult]]:
        raise NotImplementedError

    def _terminate(self, handle: InstanceHandle) -> None:
        raise NotImplementedError

    def _refresh(self, handle: InstanceHandle) -> None:
        """Update liveness of an instance that may have exited by itself."""

    def execute(self, payload: bytes) -> ExecutionResult:
        """Replay one input against the instrumented target."""
        raise NotImplementedError


# ---------------------------------------------------------------------
# process mode


@dataclass(frozen=True)
class Target:
    path: str
    runner: str
    timeout: float = 10.0


def replay(target: Target, seed_file: str | Path) -> ExecutionResult:
    """Run ``<runner> <target> <seed-file>`` and parse its coverage output.

    Failures produce an empty, flagged result rather than an exception.
    """
    argv = shlex.split(target.runner) + [target.path, str(seed_file)]
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=target.timeout, text=True)
    except (OSError, subprocess.TimeoutExpired) as exc:
        logger.warning("replay of %s failed: %s", seed_file, exc)
        return ExecutionResult({}, flagged=True)
    if proc.returncode not in (EXIT_RAN, EXIT_CRASHED):
        logger.warning("runner exited %d on %s", proc.returncode, seed_file)
        return ExecutionResult({}, flagged=True)
    try:
        result = parse_coverage(proc.stdout)
    except CoverageFormatError as exc:
        logger.warning("bad coverage output for %s: %s", seed_file, exc)
        return ExecutionResult({}, flagged=True)
    if proc.returncode == EXIT_CRASHED and not result.crashed:
        result = ExecutionResult(result.coverage, True, ("??",))
    elif proc.returncode == EXIT_RAN and result.crashed:
        result = ExecutionResult(result.coverage)
    return result


def write_pool(pool: Iterable[Seed], directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for seed in pool:
        path = directory / seed.id
        if not path.exists():
            tmp = directory / f".{seed.id}.tmp"
            tmp.write_bytes(seed.payload)
            tmp.replace(path)


def _cpu_for(unit: int) -> int | None:
    try:
        cpus = sorted(os.sched_getaffinity(0))
    except AttributeError:  # not Linux
        return None
    return cpus[unit % len(cpus)] if cpus else None


class ProcessBackend(Backend):
    """Runs external fuzzers, one process group per resource unit.

    Layout under ``workdir``: ``global/`` holds the global pool (one file per
    seed, named by hex id), ``round-<k>/<fuzzer>/queue/`` is the sync channel
    of one fuzzer group, and every instance writes to
    ``round-<k>/<fuzzer>/unit-<u>.<n>/``.
    """

    def __init__(
        self,
        specs: dict[str, AdapterSpec],
        target: Target,
        workdir: str | Path,
        units: int,
        round_time: float,
        grace: float = GRACE_PERIOD,
        clock=None,
    ) -> None:
        super().__init__(units, round_time, clock or WallClock())
        self.specs = specs
        self.target = target
        self.workdir = Path(workdir)
        self.grace = grace
        self._spawned = 0
        (self.workdir / "global").mkdir(parents=True, exist_ok=True)

    def write_global(self, pool: SeedPool) -> None:
        write_pool(pool, self.workdir / "global")

    def group_dir(self, fuzzer: str) -> Path:
        return self.workdir / f"round-{self.round_index}" / fuzzer / "queue"

    def begin_round(self, round_index: int, groups: dict[str, SeedPool]) -> None:
        super().begin_round(round_index, groups)
        for fuzzer, pool in groups.items():
            write_pool(pool, self.group_dir(fuzzer))

    def execute(self, payload: bytes) -> ExecutionResult:
        scratch = self.workdir / "replay"
        scratch.mkdir(parents=True, exist_ok=True)
        path = scratch / "input"
        path.write_bytes(payload)
        return replay(self.target, path)

    def _launch(self, handle: InstanceHandle, spec: AdapterSpec, corpus: SeedPool) -> None:
        if spec.kind is not Kind.PROCESS:
            raise AdapterError(f"adapter {spec.name} is not a process adapter")
        self._spawned += 1
        in_dir = self.group_dir(spec.name)
        write_pool(corpus, in_dir)
        out_dir = in_dir.parent / f"unit-{handle.unit}.{self._spawned}"
        out_dir.mkdir(parents=True, exist_ok=True)
        core = _cpu_for(handle.unit)
        cmd = spec.cmd.format_map(
            {"target": self.target.path, "in": str(in_dir), "out": str(out_dir),
             "core": "" if core is None else str(core), "unit": str(handle.unit)}
        )
        argv = shlex.split(cmd)

        def bind() -> None:
            if core is not None:
                os.sched_setaffinity(0, {core})

        log = open(out_dir / "fuzzer.log", "wb")
        try:
            proc = subprocess.Popen(
                argv, stdout=log, stderr=subprocess.STDOUT, stdin=subprocess.DEVNULL,
                start_new_session=True, preexec_fn=bind,
            )
        except OSError as exc:
            log.close()
            raise AdapterError(f"failed to launch {cmd!r}: {exc}") from exc
        handle.data.update(proc=proc, log=log, out=out_dir, spec=spec, seen=set(), exited_at=None)

        def watch() -> None:
            proc.wait()
            handle.data["exited_at"] = self.clock.now()

        threading.Thread(target=watch, daemon=True).start()

    def _refresh(self, handle: InstanceHandle) -> None:
        if not handle.live or "proc" not in handle.data:
            return
        proc: subprocess.Popen = handle.data["proc"]
        if proc.poll() is not None:
            exited = handle.data.get("exited_at")
            handle.state = DEAD
            handle.end = min(exited if exited is not None else self.clock.now(), handle.start + handle.budget)
            handle.data["log"].close()

    def _collect(self, handle: InstanceHandle) -> list[tuple[Seed, ExecutionResult]]:
        spec: AdapterSpec = handle.data["spec"]
        out: Path = handle.data["out"]
        seen: set[str] = handle.data["seen"]
        found: list[tuple[Seed, ExecutionResult]] = []
        for pattern in (spec.seeds_glob, spec.crashes_glob):
            for name in sorted(glob(str(out / pattern))):
                path = Path(name)
                if name in seen or not path.is_file() or path.name.startswith("."):
                    continue
                seen.add(name)
                payload = path.read_bytes()
                seed = Seed(payload, spec.name, self.round_index)
                result = replay(self.target, path)
                found.append((seed, result))
                write_pool([seed], self.group_dir(spec.name))
                self.groups.setdefault(spec.name, SeedPool()).add(seed)
        return found

    def _terminate(self, handle: InstanceHandle) -> None:
        proc: subprocess.Popen = handle.data["proc"]
        if proc.poll() is None:
            try:
                os.killpg(proc.pid, signal.SIGTERM)
            except ProcessLookupError:
                pass
            try:
                proc.wait(timeout=self.grace)
            except subprocess.TimeoutExpired:
                try:
                    os.killpg(proc.pid, signal.SIGKILL)
                except ProcessLookupError:
                    pass
                proc.wait()
        handle.data["log"].close()
