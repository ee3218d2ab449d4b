"""Scheduling policies: the bandit scheduler and the comparison baselines."""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from . import scheduler
from .scheduler import Schedule, SchedulerState
from .seedeval import ALL_METRICS, COVERAGE_METRICS


class Policy(str, Enum):
    LEGION = "legion"
    NS = "ns"  # random scheduling, no feedback, no fine-tuning
    COV = "cov"  # bandit scheduling, coverage-only seed benefit
    FIXED = "fixed"  # equal static split for the whole campaign
    PREP_FOCUS = "prep_focus"  # profile every round, then focus on the best

    @classmethod
    def parse(cls, text: str) -> Policy:
        try:
            return cls(text.strip().lower().replace("-", "_"))
        except ValueError:
            raise ValueError(
                f"unknown policy {text!r}; choose from {', '.join(p.value for p in cls)}"
            ) from None


@dataclass(frozen=True)
class Rules:
    metrics: tuple[int, ...]
    fine_tune: bool
    learns: bool
    prep_focus: bool = False


RULES = {
    Policy.LEGION: Rules(ALL_METRICS, fine_tune=True, learns=True),
    Policy.NS: Rules(ALL_METRICS, fine_tune=False, learns=False),
    Policy.COV: Rules(COVERAGE_METRICS, fine_tune=True, learns=True),
    Policy.FIXED: Rules(COVERAGE_METRICS, fine_tune=False, learns=False),
    Policy.PREP_FOCUS: Rules(COVERAGE_METRICS, fine_tune=False, learns=False, prep_focus=True),
}


def plan_round(
    policy: Policy,
    state: SchedulerState,
    fuzzers: Sequence[str],
    units: int,
    rng: random.Random,
    round_index: int,
) -> Schedule:
    order = sorted(fuzzers)
    if policy in (Policy.LEGION, Policy.COV):
        return scheduler.schedule_round(state, order, units, rng)
    if policy is Policy.NS:
        assignment = {u: rng.choice(order) for u in range(units)}
        return Schedule(assignment, {u: scheduler.RANDOM for u in assignment})
    if policy is Policy.FIXED:
        assignment = {u: order[u % len(order)] for u in range(units)}
        return Schedule(assignment, {u: scheduler.FIXED for u in assignment})
    if policy is Policy.PREP_FOCUS:
        # rotate so every fuzzer gets profiled even when units < fuzzers
        offset = (round_index * units) % len(order)
        assignment = {u: order[(u + offset) % len(order)] for u in range(units)}
        return Schedule(assignment, {u: scheduler.PREP for u in assignment})
    raise ValueError(policy)
