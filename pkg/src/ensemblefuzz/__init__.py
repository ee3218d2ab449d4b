"""Ensemble fuzzing orchestrator.

Schedules several base fuzzers on a fixed set of resource units with a
bandit, evaluates their seeds on five metrics, shares beneficial seeds
between them and reports every decision. Real fuzzers run in process mode;
:mod:`ensemblefuzz.sim` provides a deterministic simulator for desk-scale
policy studies.
"""

__version__ = "0.1.0"
