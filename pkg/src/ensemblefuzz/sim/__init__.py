"""Deterministic simulation harness: synthetic scenarios, simulated fuzzers
and baseline policies, driven through the real campaign machinery."""

from __future__ import annotations

from ..adapters import AdapterSpec, Kind
from ..callgraph import compute_depths, deep_edges
from ..campaign import Campaign, CampaignConfig
from ..policies import Policy
from ..report import CampaignReport, RoundLogWriter
from .model import SimBackend
from .scenario import (
    CrashSite,
    EdgeSpec,
    Profile,
    RegionSpec,
    Scenario,
    ScenarioError,
    ScenarioParams,
    gen_scenario,
    load_scenario,
    loads_scenario,
)

__all__ = [
    "CrashSite", "EdgeSpec", "Profile", "RegionSpec", "Scenario", "ScenarioError",
    "ScenarioParams", "SimBackend", "build_campaign", "gen_scenario", "load_scenario",
    "loads_scenario", "simulate_campaign", "scenario_deep_edges",
]


def scenario_deep_edges(scenario: Scenario, rho: float) -> frozenset[int]:
    depths = compute_depths(scenario.callgraph(), rho)
    return deep_edges(depths, scenario.edge_map())


def build_campaign(
    scenario: Scenario,
    policy: Policy | str,
    config: CampaignConfig,
    log_writer: RoundLogWriter | None = None,
) -> Campaign:
    config = config.but(policy=Policy.parse(str(getattr(policy, "value", policy))))
    backend = SimBackend(scenario, config.units, config.round_time, config.seed)
    specs = {name: AdapterSpec(name, Kind.SIMULATED) for name in scenario.profiles}
    return Campaign(
        config,
        backend,
        specs,
        scenario_deep_edges(scenario, config.rho),
        log_writer=log_writer,
        extra_echo={"scenario": {"name": scenario.name, "seed": scenario.seed}},
    )


def simulate_campaign(
    scenario: Scenario,
    policy: Policy | str,
    config: CampaignConfig,
    log_writer: RoundLogWriter | None = None,
) -> CampaignReport:
    return build_campaign(scenario, policy, config, log_writer).run()
