"""Process-mode configuration file and campaign assembly.

The file is TOML with sections ``[campaign]``, ``[target]``, ``[callgraph]``
and one ``[adapters.<name>]`` table per base fuzzer. Relative paths are
resolved against the file's directory, and ``{here}`` inside the target
runner or an adapter command expands to that directory.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .adapters import AdapterError, AdapterSpec, Kind, ProcessBackend, Target
from .callgraph import compute_depths, deep_edges, parse_callgraph, parse_edge_map, parse_entries
from .campaign import Campaign, CampaignConfig, ConfigError
from .report import CampaignReport, RoundLogWriter
from .seedpool import Seed

SEED_ENV = "ENSEMBLE_SEED"

_CAMPAIGN_KEYS = {
    "round_time": float, "monitor_time": float, "fuzz_rounds": int, "units": int,
    "seed": int, "policy": str, "prep_fraction": float, "grace": float,
    "total_budget": float, "seeds_dir": str, "workdir": str,
}
_SECTIONS = {"campaign", "target", "callgraph", "adapters"}


def env_seed(environ: Mapping[str, str] | None = None) -> int | None:
    """Seed from ``ENSEMBLE_SEED``, which takes precedence over ``--seed``."""
    value = (os.environ if environ is None else environ).get(SEED_ENV)
    if value is None or value.strip() == "":
        return None
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {value!r}") from None


def _resolve(base: Path, value: str | None) -> str | None:
    if value is None:
        return None
    p = Path(value).expanduser()
    return str(p if p.is_absolute() else (base / p).resolve())


def load_config(path: str | Path, **overrides) -> CampaignConfig:
    """Read a process-mode config; ``overrides`` replace campaign fields."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, path.resolve().parent, **overrides)


def config_from_dict(data: Mapping, base: Path, **overrides) -> CampaignConfig:
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    here = str(base)

    camp = dict(data.get("campaign", {}))
    bad = set(camp) - set(_CAMPAIGN_KEYS)
    if bad:
        raise ConfigError(f"unknown [campaign] keys {sorted(bad)}")
    try:
        fields = {k: _CAMPAIGN_KEYS[k](v) for k, v in camp.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[campaign]: {exc}") from exc
    for key in ("seeds_dir", "workdir"):
        if key in fields:
            fields[key] = _resolve(base, fields[key])

    tgt = data.get("target")
    if not tgt or "path" not in tgt or "runner" not in tgt:
        raise ConfigError("[target] needs 'path' and 'runner'")
    target = Target(
        _resolve(base, tgt["path"]),
        str(tgt["runner"]).replace("{here}", here),
        float(tgt.get("timeout", 10.0)),
    )

    cg = data.get("callgraph", {})
    if "rho" in cg:
        fields["rho"] = float(cg["rho"])

    adapters = {}
    for name, spec in sorted(data.get("adapters", {}).items()):
        spec = dict(spec)
        spec.setdefault("kind", Kind.PROCESS.value)
        if "cmd" in spec:
            spec["cmd"] = str(spec["cmd"]).replace("{here}", here)
        try:
            adapters[name] = AdapterSpec.from_dict(name, spec)
        except (AdapterError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    if not adapters:
        raise ConfigError("config defines no [adapters.*] tables")

    fields.update({k: v for k, v in overrides.items() if v is not None})
    budget = fields.pop("total_budget", None)
    common = dict(
        adapters=adapters,
        target=target,
        callgraph=_resolve(base, cg.get("file")),
        entries=_resolve(base, cg.get("entries")),
        edge_map=_resolve(base, cg.get("edge_map")),
    )
    try:
        if budget is not None and "fuzz_rounds" not in fields:
            return CampaignConfig.with_budget(budget, **fields, **common)
        return CampaignConfig(**fields, **common)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_deep_edges(config: CampaignConfig) -> frozenset[int]:
    """Deep edge ids from the configured call graph; empty without one."""
    if not config.callgraph:
        return frozenset()
    if not config.edge_map:
        raise ConfigError("[callgraph] file given without edge_map")
    try:
        entries = parse_entries(Path(config.entries).read_text()) if config.entries else ()
        graph = parse_callgraph(Path(config.callgraph).read_text(), entries)
        owners = parse_edge_map(Path(config.edge_map).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read call graph input: {exc}") from exc
    return deep_edges(compute_depths(graph, config.rho), owners)


def initial_seeds(config: CampaignConfig) -> list[Seed]:
    if not config.seeds_dir:
        return []
    root = Path(config.seeds_dir)
    if not root.is_dir():
        raise ConfigError(f"seeds_dir {root} is not a directory")
    return [Seed(p.read_bytes()) for p in sorted(root.iterdir()) if p.is_file()]


def build_process_campaign(
    config: CampaignConfig,
    workdir: str | Path | None = None,
    log_writer: RoundLogWriter | None = None,
) -> Campaign:
    workdir = workdir or config.workdir
    if workdir is None:
        raise ConfigError("process mode needs a work directory (--workdir or [campaign] workdir)")
    if config.target is None:
        raise ConfigError("process mode needs a [target]")
    for spec in config.adapters.values():
        if spec.kind is not Kind.PROCESS:
            raise ConfigError(f"adapter {spec.name} is not a process adapter")
    backend = ProcessBackend(
        dict(config.adapters), config.target, workdir, config.units, config.round_time, config.grace
    )
    return Campaign(
        config, backend, config.adapters, config_deep_edges(config),
        initial_seeds=initial_seeds(config), log_writer=log_writer,
    )


def run_process_campaign(
    config: CampaignConfig,
    workdir: str | Path | None = None,
    log_writer: RoundLogWriter | None = None,
) -> CampaignReport:
    return build_process_campaign(config, workdir, log_writer).run()
