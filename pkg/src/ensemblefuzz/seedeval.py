"""Five-metric seed evaluation, weight tuning and rewards."""

from __future__ import annotations

import math
from typing import Collection, Iterable, Mapping, NamedTuple, Sequence

from .record import ExecutionResult, FuzzRecord

N_METRICS = 5
ALL_METRICS: tuple[int, ...] = (0, 1, 2, 3, 4)
# Coverage-only evaluation (new edges, new paths).
COVERAGE_METRICS: tuple[int, ...] = (0, 1)

WeightVector = tuple[float, float, float, float, float]
QUALITATIVE: WeightVector = (1.0, 1.0, 1.0, 1.0, 1.0)
UNIFORM: WeightVector = (0.2, 0.2, 0.2, 0.2, 0.2)


class MetricVector(NamedTuple):
    new_edges: int = 0
    new_paths: int = 0
    new_crashes: int = 0
    deep_edges: int = 0
    rare_edges: int = 0

    def __add__(self, other):  # type: ignore[override]
        return MetricVector(*(a + b for a, b in zip(self, other)))

    def masked(self, metrics: Collection[int]) -> MetricVector:
        return MetricVector(*(v if i in metrics else 0 for i, v in enumerate(self)))

    def any(self) -> bool:
        return any(self)


ZERO = MetricVector()


def evaluate_pool(
    pool: Iterable[ExecutionResult],
    snapshot: FuzzRecord,
    deep: Collection[int],
) -> MetricVector:
    """Count c0..c4 for a pool against a fixed snapshot of the global record."""
    covered: set[int] = set()
    paths: set[str] = set()
    crashes: set[str] = set()
    for r in pool:
        covered |= r.edges
        paths.add(r.path_id())
        if r.crashed:
            crashes.add(r.crash_id())

    threshold = snapshot.less_frequent_threshold()
    known = snapshot.global_coverage
    return MetricVector(
        new_edges=sum(1 for e in covered if e not in known),
        new_paths=len(paths - snapshot.known_paths),
        new_crashes=len(crashes - snapshot.known_crashes),
        deep_edges=sum(1 for e in covered if e in deep),
        rare_edges=sum(1 for e in covered if known.get(e, 0) < threshold),
    )


def tune_weights(
    vectors: Mapping[str, Sequence[int]],
    metrics: Collection[int] = ALL_METRICS,
) -> WeightVector:
    """Weight each metric by its population std-dev across fuzzers.

    Metrics outside ``metrics`` get weight 0. When no active metric varies,
    the active metrics share the weight uniformly.
    """
    if not vectors:
        raise ValueError("tune_weights needs at least one fuzzer")
    active = sorted(set(metrics))
    sigma = [0.0] * N_METRICS
    for j in active:
        column = [float(v[j]) for v in vectors.values()]
        mean = sum(column) / len(column)
        sigma[j] = math.sqrt(sum((x - mean) ** 2 for x in column) / len(column))
    total = sum(sigma)
    if total == 0.0:
        w = 1.0 / len(active)
        return tuple(w if j in active else 0.0 for j in range(N_METRICS))  # type: ignore[return-value]
    return tuple(s / total for s in sigma)  # type: ignore[return-value]


def reward(m: Sequence[float], theta: Sequence[float]) -> float:
    return float(sum(t * c for t, c in zip(theta, m)))


def is_beneficial(
    r: ExecutionResult,
    snapshot: FuzzRecord,
    deep: Collection[int],
    metrics: Collection[int] = ALL_METRICS,
) -> bool:
    return evaluate_pool([r], snapshot, deep).masked(metrics).any()
