"""Command line: ``ensemblefuzz <verb> [options]``.

Every verb runs locally by default. With ``--server URL`` the simulate,
compare, depths and report verbs send the request to a running service
instead and print or save its answer.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .adapters import AdapterError
from .callgraph import CallGraphError
from .campaign import ConfigError
from .report import ReportError, emit_report, load_report
from .sim import ScenarioError

USAGE_ERRORS = (ConfigError, ScenarioError, CallGraphError, ReportError, AdapterError, ValueError, OSError)


class UsageError(Exception):
    """Bad input detected before any campaign work started (exit 2)."""


def _write(data: bytes, out: str | None) -> None:
    if out:
        path = Path(out)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f".{path.name}.tmp")
        tmp.write_bytes(data)
        tmp.replace(path)
    else:
        sys.stdout.write(data.decode())


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


# -- remote ------------------------------------------------------------

def _post(server: str, route: str, body: dict) -> "httpx.Response":
    import httpx

    try:
        resp = httpx.post(server.rstrip("/") + route, json=body, timeout=None)
    except httpx.HTTPError as exc:
        raise RuntimeError(f"service request failed: {exc}") from exc
    if resp.status_code == 422 or resp.status_code == 400:
        raise UsageError(f"service rejected the request: {resp.text}")
    if resp.status_code != 200:
        raise RuntimeError(f"service error {resp.status_code}: {resp.text}")
    return resp


def _scenario_text(ref: str) -> str:
    from .operations import BUNDLED_SCENARIOS, bundled_scenario_text

    if Path(ref).exists():
        return Path(ref).read_text()
    if ref in BUNDLED_SCENARIOS:
        return bundled_scenario_text(ref)
    raise UsageError(f"no scenario file {ref!r}")


def _seed(args) -> int:
    from .config import env_seed

    try:
        seed = env_seed()
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    return seed if seed is not None else args.seed


# -- verbs -------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .operations import resolve_scenario, scenario_config, simulate

    seed = _seed(args)
    if args.server:
        if args.logs:
            raise UsageError("--logs is only available for local runs")
        resp = _post(args.server, "/simulate", {
            "scenario": _scenario_text(args.scenario), "policy": args.policy, "seed": seed,
            "rounds": args.rounds, "units": args.units, "format": args.format,
        })
        _write(resp.content, args.out)
        return 0
    try:
        scenario = resolve_scenario(args.scenario)
        # validate settings before any work starts
        scenario_config(scenario, args.policy, seed, args.rounds, args.units)
    except USAGE_ERRORS as exc:
        raise UsageError(str(exc)) from exc
    report = simulate(scenario, args.policy, seed, args.rounds, args.units, args.logs)
    _write(emit_report(report, args.format), args.out)
    return 0


def cmd_run(args) -> int:
    from .config import build_process_campaign, load_config
    from .report import RoundLogWriter

    seed = _seed(args)
    writer = None
    try:
        config = load_config(
            args.config, seed=seed, fuzz_rounds=args.rounds, units=args.units,
            policy=args.policy, workdir=args.workdir,
        )
        writer = RoundLogWriter(args.logs) if args.logs else None
        campaign = build_process_campaign(config, log_writer=writer)
    except USAGE_ERRORS as exc:
        raise UsageError(str(exc)) from exc
    try:
        report = campaign.run()
    finally:
        if writer:
            writer.close()
    _write(emit_report(report, args.format), args.out)
    return 0


def cmd_depths(args) -> int:
    from .operations import depth_summary, entries_from_text, format_depths

    graph = _read(args.callgraph)
    entries = entries_from_text(_read(args.entries)) if args.entries else []
    edge_map = _read(args.edge_map) if args.edge_map else None
    if args.server:
        summary = _post(args.server, "/depths", {
            "callgraph": graph, "entries": entries, "edge_map": edge_map, "rho": args.rho,
        }).json()
    else:
        try:
            summary = depth_summary(graph, entries, edge_map, args.rho)
        except USAGE_ERRORS as exc:
            raise UsageError(str(exc)) from exc
    if args.format == "json":
        _write((json.dumps(summary, indent=2, sort_keys=True) + "\n").encode(), args.out)
    else:
        _write(format_depths(summary).encode(), args.out)
    return 0


def cmd_report(args) -> int:
    if args.server:
        resp = _post(args.server, "/report/render", {"logs": _read(args.logs), "format": args.format})
        _write(resp.content, args.out)
        return 0
    try:
        report = load_report(args.logs)
    except USAGE_ERRORS as exc:
        raise UsageError(str(exc)) from exc
    _write(emit_report(report, args.format), args.out)
    return 0


def cmd_compare(args) -> int:
    from .operations import compare, format_compare, parse_policies, parse_seeds, resolve_scenario

    try:
        policies = parse_policies(args.policies)
        seeds = parse_seeds(args.seeds)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.server:
        table = _post(args.server, "/compare", {
            "scenario": _scenario_text(args.scenario), "policies": policies, "seeds": seeds,
            "baseline": args.baseline, "rounds": args.rounds, "units": args.units,
        }).json()
    else:
        try:
            scenario = resolve_scenario(args.scenario)
        except USAGE_ERRORS as exc:
            raise UsageError(str(exc)) from exc
        table, reports = compare(
            scenario, policies, seeds, args.baseline, args.rounds, args.units, args.jobs
        )
        if args.reports_dir:
            root = Path(args.reports_dir)
            root.mkdir(parents=True, exist_ok=True)
            for (policy, seed), data in sorted(reports.items()):
                (root / f"{policy}-{seed}.json").write_bytes(data)
    sys.stdout.write(format_compare(table))
    if args.out:
        _write((json.dumps(table, indent=2, sort_keys=True) + "\n").encode(), args.out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# -- parser ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ensemblefuzz", description="Ensemble fuzzing orchestrator")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", required=True, metavar="VERB")

    def common(sp, server=True):
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        if server:
            sp.add_argument("--server", metavar="URL", help="send the request to a running service")

    def campaign_flags(sp):
        sp.add_argument("--policy", default="legion",
                        help="legion, ns, cov, fixed or prep_focus (default legion)")
        sp.add_argument("--seed", type=int, default=0, help="rng seed; ENSEMBLE_SEED overrides it")
        sp.add_argument("--rounds", type=int, help="number of rounds")
        sp.add_argument("--units", type=int, help="resource units (cores)")

    sp = sub.add_parser("run", help="process-mode campaign from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--workdir", help="directory for fuzzer queues and the global pool")
    sp.add_argument("--logs", help="write the JSON-lines round log here")
    campaign_flags(sp)
    sp.set_defaults(policy=None)
    common(sp, server=False)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("simulate", help="simulated campaign on a scenario")
    sp.add_argument("--scenario", required=True, help="scenario file or bundled name")
    sp.add_argument("--logs", help="write the JSON-lines round log here")
    campaign_flags(sp)
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("depths", help="call-graph depths and deep set")
    sp.add_argument("--callgraph", required=True)
    sp.add_argument("--entries", help="file listing entry functions")
    sp.add_argument("--edge-map", help="file mapping edge ids to functions")
    sp.add_argument("--rho", type=float, default=1.5)
    sp.add_argument("--out")
    sp.add_argument("--format", choices=("text", "json"), default="text")
    sp.add_argument("--server", metavar="URL")
    sp.set_defaults(func=cmd_depths)

    sp = sub.add_parser("report", help="re-render a report from round logs or a JSON report")
    sp.add_argument("--logs", required=True)
    common(sp)
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("compare", help="paired-seed policy comparison")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--policies", default="legion,ns,cov")
    sp.add_argument("--seeds", default="1..10", help="range 1..10 or list 1,2,3")
    sp.add_argument("--baseline", help="policy the others are compared against (default: first)")
    sp.add_argument("--rounds", type=int)
    sp.add_argument("--units", type=int)
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sp.add_argument("--reports-dir", help="also save every campaign report here")
    sp.add_argument("--out", help="write the table as JSON here")
    sp.add_argument("--server", metavar="URL")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ensemblefuzz {args.verb}: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # runtime campaign failure
        logging.getLogger(__name__).debug("failure", exc_info=True)
        print(f"ensemblefuzz {args.verb}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
