import dataclasses
import json

import pytest

from ensemblefuzz.campaign import CampaignConfig
from ensemblefuzz.operations import resolve_scenario, simulate
from ensemblefuzz.report import emit_report
from ensemblefuzz.sim import (
    EdgeSpec, Profile, RegionSpec, Scenario, ScenarioError, ScenarioParams, gen_scenario,
    loads_scenario, simulate_campaign,
)
from ensemblefuzz.sim.scenario import make_payload

PARAMS = ScenarioParams(
    name="gen-test",
    regions=[
        RegionSpec("A", "FORMAT", 20),
        RegionSpec("B", "SOLVER", 15, after="A", depth=3, crash_sites=2),
    ],
    profiles=[Profile("g", {"FORMAT": 0.01}), Profile("h", {"SOLVER": 0.01})],
)


def only(scenario, *names):
    return dataclasses.replace(scenario, profiles={n: scenario.profiles[n] for n in names})


def test_generation_is_deterministic():
    assert gen_scenario(PARAMS, 42) == gen_scenario(PARAMS, 42)
    assert gen_scenario(PARAMS, 42).edges != gen_scenario(PARAMS, 43).edges


def test_three_fuzzer_report_is_reproducible():
    scen = dataclasses.replace(
        gen_scenario(PARAMS, 42),
        profiles={**gen_scenario(PARAMS, 42).profiles, "m": Profile("m", {"FORMAT": 0.004}, churn=0.02)},
    )
    cfg = CampaignConfig(fuzz_rounds=10, units=3, seed=9)
    runs = [emit_report(simulate_campaign(scen, "legion", cfg)) for _ in range(2)]
    assert runs[0] == runs[1]
    assert len(json.loads(runs[0])["rounds"]) == 10


def test_toml_round_trip():
    for scen in (gen_scenario(PARAMS, 42), resolve_scenario("handoff"), resolve_scenario("finetune")):
        assert loads_scenario(scen.dumps()) == scen


def test_scenario_validation():
    with pytest.raises(ScenarioError):
        Scenario("x", 0, (EdgeSpec(1, "OPEN", "main"), EdgeSpec(1, "OPEN", "main")), (), ("main",), {})
    with pytest.raises(ScenarioError):
        Scenario("x", 0, (EdgeSpec(1, "LOOP", "main", (2,)), EdgeSpec(2, "LOOP", "main", (1,))),
                 (), ("main",), {})
    with pytest.raises(ScenarioError):
        loads_scenario("[scenario]\nname = 'x'\nseed = 'nope'\n")
    with pytest.raises(ScenarioError, match="unknown"):
        loads_scenario("name = 'x'\n")
    with pytest.raises(ScenarioError):
        loads_scenario("[scenario\n")


def test_payload_execution():
    scen = gen_scenario(PARAMS, 42)
    region_b = [e for e in scen.edges if e.gate == "SOLVER"]
    deepest = region_b[-1]
    res = scen.execute(make_payload(deepest.id))
    assert deepest.id in res.coverage and set(deepest.requires) <= set(res.coverage)
    assert scen.open_edges <= set(res.coverage)
    assert scen.execute(b"") .coverage.keys() == scen.open_edges
    site = scen.crashes[0].edge
    crashed = scen.execute(make_payload(site, crashed=True))
    assert crashed.crashed and crashed.stack_frames
    assert not scen.execute(make_payload(site, tag="x")).crashed


def edges_with_gate(report_edges, scenario, gate):
    return {e.id for e in scenario.edges if e.gate == gate} & report_edges


def covered(scenario, policy="legion", rounds=6, units=2, seed=1):
    from ensemblefuzz.sim import build_campaign

    c = build_campaign(scenario, policy, CampaignConfig(fuzz_rounds=rounds, units=units, seed=seed))
    c.run()
    return set(c.record.global_coverage)


def test_handoff_needs_both_fuzzers():
    scen = gen_scenario(PARAMS, 42)
    solver = {e.id for e in scen.edges if e.gate == "SOLVER"}
    assert not covered(only(scen, "g")) & solver
    assert not covered(only(scen, "h")) & solver
    assert covered(scen) & solver


def test_zero_rate_profiles_stay_at_seed_coverage():
    scen = gen_scenario(PARAMS, 42)
    idle = dataclasses.replace(scen, profiles={"z1": Profile("z1"), "z2": Profile("z2")})
    assert covered(idle) == set(scen.open_edges)


def one_capable():
    edges = [EdgeSpec(1, "OPEN", "main", (), 3)]
    edges += [EdgeSpec(100 + i, "LOOP", "loop", (), 1) for i in range(800)]
    profiles = {
        "good": Profile("good", {"LOOP": 0.0002}, churn=0.05),
        "idle1": Profile("idle1"),
        "idle2": Profile("idle2"),
    }
    return Scenario("one", 1, tuple(edges), (("main", "loop"),), ("main",), profiles)


def test_fixed_split_versus_legion_focus():
    scen = one_capable()
    cfg = CampaignConfig(fuzz_rounds=5, units=6, seed=2)
    fixed = simulate_campaign(scen, "fixed", cfg)
    legion = simulate_campaign(scen, "legion", cfg)
    assert all(log.units_held["good"] == 2 for log in fixed.rounds)
    assert fixed.rounds[-1].shares["good"] == pytest.approx(1 / 3)
    assert legion.rounds[4].shares["good"] > 1 / 3


def test_discovery_is_monotone():
    report = simulate(resolve_scenario("handoff"), "legion", seed=5, rounds=8)
    for key in ("edges", "paths", "crashes"):
        series = report.series()[key]
        assert series == sorted(series)


def first_crash_round(report):
    return next((log.round for log in report.rounds if log.stats["crashes"]), None)


def test_deep_crash_found_earlier_with_deep_metric():
    scen = resolve_scenario("deep")
    earlier = 0
    for seed in range(1, 11):
        legion = first_crash_round(simulate(scen, "legion", seed=seed))
        cov = first_crash_round(simulate(scen, "cov", seed=seed))
        if legion is not None and (cov is None or legion < cov):
            earlier += 1
    assert earlier >= 7


def test_fixed_interval_siblings_both_produce():
    from ensemblefuzz.adapters import AdapterSpec
    from ensemblefuzz.seedpool import Seed, SeedPool
    from ensemblefuzz.sim import SimBackend

    edges = (EdgeSpec(1, "OPEN", "main"),) + tuple(EdgeSpec(10 + i, "LOOP", "main") for i in range(500))
    scen = Scenario("sib", 0, edges, (), ("main",), {"d": Profile("d", {"LOOP": 0.0001}, deterministic=True)})

    def found(instances):
        b = SimBackend(scen, units=2, round_time=100)
        b.begin_round(1, {"d": SeedPool.of([Seed(b"")])})
        handles = [b.spawn(AdapterSpec("d"), u, b.groups["d"], 100) for u in range(instances)]
        b.advance(100)
        return [len(b.harvest(h)) for h in handles]

    (alone,) = found(1)
    pair = found(2)
    assert all(n > 0 for n in pair)
    assert sum(pair) > 1.5 * alone
