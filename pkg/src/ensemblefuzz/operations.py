"""Entry points shared by the command line and the HTTP service."""

from __future__ import annotations

import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .callgraph import (
    DEFAULT_RHO, compute_depths, deep_edges, deep_functions, parse_callgraph, parse_edge_map,
    parse_entries,
)
from .campaign import CampaignConfig
from .policies import Policy
from .report import CampaignReport, RoundLogWriter, compare_table, emit_report
from .sim import Scenario, ScenarioError, load_scenario, loads_scenario, simulate_campaign

BUNDLED_SCENARIOS = ("handoff", "deep", "finetune")


def bundled_scenario_text(name: str) -> str:
    return resources.files("ensemblefuzz.scenarios").joinpath(f"{name}.toml").read_text()


def resolve_scenario(ref: str) -> Scenario:
    """Load a scenario from a path, or by name from the bundled set."""
    path = Path(ref)
    if path.exists():
        return load_scenario(path)
    if ref in BUNDLED_SCENARIOS:
        return loads_scenario(bundled_scenario_text(ref))
    raise ScenarioError(f"no scenario file {ref!r} (bundled: {', '.join(BUNDLED_SCENARIOS)})")


def scenario_config(
    scenario: Scenario,
    policy: str = "legion",
    seed: int = 0,
    rounds: int | None = None,
    units: int | None = None,
) -> CampaignConfig:
    """Campaign settings: explicit arguments, then scenario defaults, then globals."""
    fields = {"policy": Policy.parse(policy), "seed": seed}
    rounds = rounds if rounds is not None else scenario.defaults.get("fuzz_rounds")
    units = units if units is not None else scenario.defaults.get("units")
    if rounds is not None:
        fields["fuzz_rounds"] = rounds
    if units is not None:
        fields["units"] = units
    return CampaignConfig(**fields)


def simulate(
    scenario: Scenario,
    policy: str = "legion",
    seed: int = 0,
    rounds: int | None = None,
    units: int | None = None,
    log_path: str | Path | None = None,
) -> CampaignReport:
    config = scenario_config(scenario, policy, seed, rounds, units)
    writer = RoundLogWriter(log_path) if log_path else None
    try:
        return simulate_campaign(scenario, config.policy, config, writer)
    finally:
        if writer:
            writer.close()


# -- compare ------------------------------------------------------------

_RANGE = re.compile(r"^\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*$")


def parse_seeds(text: str) -> list[int]:
    """``1..10`` (inclusive) or a comma list such as ``1,4,9``."""
    m = _RANGE.match(text)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ValueError(f"bad seed list {text!r}; use 1..10 or 1,2,3") from None
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


def parse_policies(text: str) -> list[str]:
    names = [Policy.parse(p).value for p in text.split(",") if p.strip()]
    if not names:
        raise ValueError("no policies given")
    if len(set(names)) != len(names):
        raise ValueError("duplicate policy in list")
    return names


@dataclass(frozen=True)
class _Job:
    scenario: Scenario
    policy: str
    seed: int
    rounds: int | None
    units: int | None


def _run_job(job: _Job) -> bytes:
    report = simulate(job.scenario, job.policy, job.seed, job.rounds, job.units)
    return emit_report(report, "json")


def run_many(
    scenario: Scenario,
    policies: Sequence[str],
    seeds: Sequence[int],
    rounds: int | None = None,
    units: int | None = None,
    jobs: int = 1,
) -> dict[tuple[str, int], bytes]:
    """JSON reports for every (policy, seed) pair, optionally in parallel.

    Each campaign owns its random state, so the bytes do not depend on
    ``jobs``.
    """
    work = [_Job(scenario, p, s, rounds, units) for p in policies for s in seeds]
    if jobs <= 1:
        outputs = [_run_job(j) for j in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_run_job, work))
    return {(j.policy, j.seed): out for j, out in zip(work, outputs)}


def compare(
    scenario: Scenario,
    policies: Sequence[str],
    seeds: Sequence[int],
    baseline: str | None = None,
    rounds: int | None = None,
    units: int | None = None,
    jobs: int = 1,
) -> tuple[dict, dict[tuple[str, int], bytes]]:
    import json

    baseline = Policy.parse(baseline).value if baseline else policies[0]
    if baseline not in policies:
        raise ValueError(f"baseline {baseline} is not among the compared policies")
    reports = run_many(scenario, policies, seeds, rounds, units, jobs)
    finals = {
        p: [json.loads(reports[(p, s)])["totals"]["edges"] for s in seeds] for p in policies
    }
    table = compare_table(finals, list(seeds), baseline)
    table["scenario"] = {"name": scenario.name, "seed": scenario.seed}
    return table, reports


def format_compare(table: dict) -> str:
    policies = [k for k in table["rows"][0] if k != "seed"] if table["rows"] else []
    width = max([8] + [len(p) + 2 for p in policies])
    lines = ["seed".ljust(6) + "".join(p.rjust(width) for p in policies)]
    for row in table["rows"]:
        lines.append(str(row["seed"]).ljust(6) + "".join(str(row[p]).rjust(width) for p in policies))
    n = len(table["rows"])
    base = table["baseline"]
    for p, wins in sorted(table["baseline_at_least"].items()):
        lines.append(f"{base} >= {p}: {wins}/{n}")
    return "\n".join(lines) + "\n"


# -- depths -------------------------------------------------------------

def depth_summary(
    callgraph_text: str,
    entries: Sequence[str] = (),
    edge_map_text: str | None = None,
    rho: float = DEFAULT_RHO,
) -> dict:
    graph = parse_callgraph(callgraph_text, entries)
    d = compute_depths(graph, rho)
    out = {
        "mean_depth": d.mean_depth,
        "threshold": d.deep_threshold,
        "rho": rho,
        "depths": {f: d.depth[f] for f in sorted(d.depth)},
        "deep_functions": sorted(deep_functions(d)),
    }
    if edge_map_text is not None:
        out["deep_edges"] = sorted(deep_edges(d, parse_edge_map(edge_map_text)))
    return out


def entries_from_text(text: str) -> list[str]:
    return sorted(parse_entries(text))


def _num(x: float) -> str:
    return f"{x:g}"


def format_depths(summary: dict) -> str:
    deep = ",".join(summary["deep_functions"])
    lines = [f"d_μ={_num(summary['mean_depth'])}, threshold={_num(summary['threshold'])}, deep={{{deep}}}"]
    for f, depth in summary["depths"].items():
        lines.append(f"  {f}\t{'unreachable' if depth is None else depth}")
    if "deep_edges" in summary:
        lines.append("deep edges: " + " ".join(str(e) for e in summary["deep_edges"]))
    return "\n".join(lines) + "\n"
