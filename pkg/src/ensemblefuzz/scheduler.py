"""Bandit-driven resource scheduling.

Each base fuzzer is an arm described by ``(gamma, t)``: its accumulated
reward and the pull count of the last round it ran. Per resource unit the
scheduler either primes a never-run fuzzer or draws one with probability
proportional to ``exp(q + u)`` where ``q = gamma / (gamma + t)`` and
``u = sqrt(2 ln N / t)``.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Collection, Iterable, Mapping, Sequence

from .seedeval import MetricVector, reward

# How a unit got its fuzzer; logged with every schedule.
PRIME = "prime"
SOFTMAX = "softmax"
PRIME_FILL = "prime-fill"
RANDOM = "random"
FIXED = "fixed"
PREP = "prep"


@dataclass
class FuzzerEval:
    fuzzer: str
    gamma: float = 0.0
    t: float = 0.0

    @property
    def primed(self) -> bool:
        return self.t != 0


@dataclass(frozen=True)
class CandidateScore:
    fuzzer: str
    q: float
    u: float  # math.inf for an unprimed fuzzer

    @property
    def score(self) -> float:
        return self.q + self.u


@dataclass(frozen=True)
class Reassignment:
    at: float  # fraction of the round
    unit: int
    from_fuzzer: str
    to_fuzzer: str


@dataclass
class Schedule:
    assignment: dict[int, str]
    kinds: dict[int, str] = field(default_factory=dict)
    reassignments: list[Reassignment] = field(default_factory=list)

    def __post_init__(self) -> None:
        if sorted(self.assignment) != list(range(len(self.assignment))):
            raise ValueError("units must be numbered 0..n-1, each assigned once")

    @property
    def units(self) -> int:
        return len(self.assignment)

    def units_by_fuzzer(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for f in self.assignment.values():
            counts[f] = counts.get(f, 0) + 1
        return counts

    def fuzzers(self) -> list[str]:
        return sorted(set(self.assignment.values()))

    def reassign(self, at: float, unit: int, to_fuzzer: str) -> Reassignment:
        if not 0.5 <= at <= 1.0:
            raise ValueError(f"reassignment at fraction {at} outside [0.5, 1.0]")
        current = self.holder(unit, at)
        move = Reassignment(at, unit, current, to_fuzzer)
        self.reassignments.append(move)
        return move

    def holder(self, unit: int, at: float) -> str:
        """Fuzzer holding ``unit`` at round fraction ``at``."""
        fuzzer = self.assignment[unit]
        for move in self.reassignments:
            if move.unit == unit and move.at <= at:
                fuzzer = move.to_fuzzer
        return fuzzer


@dataclass
class SchedulerState:
    evals: dict[str, FuzzerEval] = field(default_factory=dict)
    n_total: float = 0.0
    # assigned for priming, waiting for their first feedback
    pending: set[str] = field(default_factory=set)

    @classmethod
    def initial(cls, fuzzers: Iterable[str]) -> SchedulerState:
        return cls({f: FuzzerEval(f) for f in fuzzers})

    def get(self, fuzzer: str) -> FuzzerEval:
        return self.evals.get(fuzzer) or FuzzerEval(fuzzer)

    def copy(self) -> SchedulerState:
        return SchedulerState(
            {f: FuzzerEval(e.fuzzer, e.gamma, e.t) for f, e in self.evals.items()},
            self.n_total,
            set(self.pending),
        )


def score(ev: FuzzerEval, n_total: float) -> CandidateScore:
    if ev.t == 0:
        return CandidateScore(ev.fuzzer, 1.0, math.inf)
    q = ev.gamma / (ev.gamma + ev.t)
    log_n = math.log(n_total) if n_total > 0 else 0.0
    u = math.sqrt(2.0 * max(log_n, 0.0) / ev.t)
    return CandidateScore(ev.fuzzer, q, u)


def selection_probabilities(scores: Sequence[CandidateScore]) -> list[float]:
    if not scores:
        raise ValueError("no candidates to select from")
    if any(math.isinf(s.u) for s in scores):
        raise ValueError("soft-max needs finite scores; prime unprimed fuzzers first")
    top = max(s.score for s in scores)
    weights = [math.exp(s.score - top) for s in scores]
    total = math.fsum(weights)
    return [w / total for w in weights]


def softmax_select(scores: Sequence[CandidateScore], rng: random.Random) -> str:
    probs = selection_probabilities(scores)
    x = rng.random()
    acc = 0.0
    for s, p in zip(scores, probs):
        acc += p
        if x < acc:
            return s.fuzzer
    return scores[-1].fuzzer


def schedule_round(
    state: SchedulerState,
    fuzzers: Collection[str],
    units: int,
    rng: random.Random,
) -> Schedule:
    """Assign every unit to a fuzzer, priming never-run fuzzers first.

    ``state.n_total`` grows once per call by the sum of current pull counts.
    """
    if units < 1:
        raise ValueError("need at least one resource unit")
    if not fuzzers:
        raise ValueError("need at least one fuzzer")
    order = sorted(fuzzers)
    for f in order:
        state.evals.setdefault(f, FuzzerEval(f))
    state.n_total += sum(state.evals[f].t for f in order)

    assignment: dict[int, str] = {}
    kinds: dict[int, str] = {}
    primed_now: list[str] = []
    for unit in range(units):
        unprimed = [f for f in order if state.evals[f].t == 0 and f not in state.pending]
        if unprimed:
            f = unprimed[0]
            state.pending.add(f)
            primed_now.append(f)
            assignment[unit], kinds[unit] = f, PRIME
            continue
        candidates = [score(state.evals[f], state.n_total) for f in order if state.evals[f].t != 0]
        if candidates:
            assignment[unit] = softmax_select(candidates, rng)
            kinds[unit] = SOFTMAX
        else:
            # every fuzzer is awaiting its first evaluation: cycle through
            # the priming queue so leftover units are split evenly
            pool = primed_now or sorted(state.pending & set(order))
            assignment[unit] = pool[unit % len(pool)]
            kinds[unit] = PRIME_FILL
    return Schedule(assignment, kinds)


def feedback_rewards(
    state: SchedulerState,
    rewards: Mapping[str, float],
    pulls: Mapping[str, float],
) -> SchedulerState:
    for f, pull in pulls.items():
        if pull <= 0:
            raise ValueError(f"pull count for {f} must be positive, got {pull}")
    for f in sorted(pulls):
        gain = float(rewards.get(f, 0.0))
        if gain < 0:
            raise ValueError(f"negative reward for {f}")
        ev = state.evals.get(f)
        if ev is None:
            ev = state.evals[f] = FuzzerEval(f)
        ev.gamma += gain
        ev.t = float(pulls[f])
        state.pending.discard(f)
    return state


def feedback(
    state: SchedulerState,
    round_metrics: Mapping[str, MetricVector],
    theta: Sequence[float],
    pulls: Mapping[str, float],
) -> SchedulerState:
    rewards = {f: reward(round_metrics.get(f, MetricVector()), theta) for f in pulls}
    return feedback_rewards(state, rewards, pulls)


def retarget(
    rewards: Mapping[str, float],
    running: Collection[str],
    held: Mapping[str, int] | None = None,
) -> str | None:
    """Best fuzzer still producing this round, or None to end the round."""
    if not running:
        return None
    held = held or {}
    return min(running, key=lambda f: (-rewards.get(f, 0.0), held.get(f, 0), f))
