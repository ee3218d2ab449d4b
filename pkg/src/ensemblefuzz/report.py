"""Round logs, campaign reports and their JSON / CSV renderings.

A report is built purely from the campaign header and its round logs, so a
report re-rendered from the line-delimited log file is identical to the one
emitted at the end of the run.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

SCHEMA_VERSION = 1
CSV_COLUMNS = (
    ["round", "fuzzer", "units_held", "pulls", "gamma_new"]
    + [f"c{j}" for j in range(5)]
    + [f"theta{j}" for j in range(5)]
    + ["edges_total", "paths_total", "crashes_total"]
)


class ReportError(ValueError):
    pass


@dataclass
class RoundLog:
    round: int
    assignment: dict[int, str]
    kinds: dict[int, str]
    reassignments: list[dict]
    units_held: dict[str, int]
    metrics: dict[str, list[int]]
    rewards: dict[str, float]
    pulls: dict[str, float]
    shares: dict[str, float]
    theta: list[float]
    scheduler: dict
    stats: dict[str, int]
    early_terminated: bool
    duration: float
    uploaded: list[str] = field(default_factory=list)
    crashes: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "schedule": {
                "assignment": {str(u): f for u, f in sorted(self.assignment.items())},
                "kinds": {str(u): k for u, k in sorted(self.kinds.items())},
                "reassignments": list(self.reassignments),
            },
            "units_held": dict(sorted(self.units_held.items())),
            "metrics": dict(sorted(self.metrics.items())),
            "rewards": dict(sorted(self.rewards.items())),
            "pulls": dict(sorted(self.pulls.items())),
            "shares": dict(sorted(self.shares.items())),
            "theta": list(self.theta),
            "scheduler": self.scheduler,
            "stats": dict(self.stats),
            "early_terminated": self.early_terminated,
            "duration": self.duration,
            "uploaded": list(self.uploaded),
            "crashes": {k: self.crashes[k] for k in sorted(self.crashes)},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> RoundLog:
        try:
            sched = d["schedule"]
            return cls(
                round=int(d["round"]),
                assignment={int(u): f for u, f in sched["assignment"].items()},
                kinds={int(u): k for u, k in sched["kinds"].items()},
                reassignments=list(sched["reassignments"]),
                units_held=dict(d["units_held"]),
                metrics={f: list(v) for f, v in d["metrics"].items()},
                rewards=dict(d["rewards"]),
                pulls=dict(d["pulls"]),
                shares=dict(d["shares"]),
                theta=list(d["theta"]),
                scheduler=dict(d["scheduler"]),
                stats=dict(d["stats"]),
                early_terminated=bool(d["early_terminated"]),
                duration=d["duration"],
                uploaded=list(d.get("uploaded", [])),
                crashes=dict(d.get("crashes", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ReportError(f"malformed round log: {exc}") from exc


@dataclass
class CampaignReport:
    config: dict
    fuzzers: list[str]
    initial_stats: dict[str, int]
    rounds: list[RoundLog]
    duration: float
    clock: str = "virtual"

    @property
    def totals(self) -> dict[str, int]:
        return dict(self.rounds[-1].stats if self.rounds else self.initial_stats)

    def crash_buckets(self) -> dict[str, dict]:
        buckets: dict[str, dict] = {}
        for log in self.rounds:
            for cid, info in log.crashes.items():
                b = buckets.setdefault(cid, {"frames": list(info["frames"]), "seeds": [], "first_round": log.round})
                for s in info["seeds"]:
                    if s not in b["seeds"]:
                        b["seeds"].append(s)
        return {k: buckets[k] for k in sorted(buckets)}

    def resource_shares(self) -> dict[str, list[float]]:
        return {f: [log.shares.get(f, 0.0) for log in self.rounds] for f in self.fuzzers}

    def series(self) -> dict[str, list]:
        return {
            "edges": [log.stats["edges"] for log in self.rounds],
            "paths": [log.stats["paths"] for log in self.rounds],
            "crashes": [log.stats["crashes"] for log in self.rounds],
            "theta": [log.theta for log in self.rounds],
            "rewards": {f: [log.rewards.get(f, 0.0) for log in self.rounds] for f in self.fuzzers},
            "shares": self.resource_shares(),
        }

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "fuzzers": list(self.fuzzers),
            "initial_stats": dict(self.initial_stats),
            "totals": self.totals,
            "series": self.series(),
            "crash_buckets": self.crash_buckets(),
            "rounds": [log.to_dict() for log in self.rounds],
            "duration": self.duration,
            "clock": self.clock,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> CampaignReport:
        check_schema(d)
        try:
            return cls(
                config=dict(d["config"]),
                fuzzers=list(d["fuzzers"]),
                initial_stats=dict(d["initial_stats"]),
                rounds=[RoundLog.from_dict(r) for r in d["rounds"]],
                duration=d["duration"],
                clock=d.get("clock", "virtual"),
            )
        except KeyError as exc:
            raise ReportError(f"report is missing {exc}") from exc

    def header(self) -> dict:
        return {
            "kind": "campaign",
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "fuzzers": list(self.fuzzers),
            "initial_stats": dict(self.initial_stats),
            "clock": self.clock,
        }


def check_schema(d: Mapping) -> None:
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ReportError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")


def to_json(report: CampaignReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def to_csv(report: CampaignReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for log in report.rounds:
        for f in report.fuzzers:
            c = log.metrics.get(f, [0] * 5)
            writer.writerow(
                [log.round, f, log.units_held.get(f, 0), repr(float(log.pulls.get(f, 0.0))),
                 repr(float(log.rewards.get(f, 0.0)))]
                + list(c)
                + [repr(float(t)) for t in log.theta]
                + [log.stats["edges"], log.stats["paths"], log.stats["crashes"]]
            )
    return buf.getvalue()


def emit_report(report: CampaignReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return to_json(report).encode()
    if fmt == "csv":
        return to_csv(report).encode()
    raise ReportError(f"unknown format {fmt!r}")


class RoundLogWriter:
    """Append-only JSON-lines log: one header record, then one per round."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")

    def header(self, record: dict) -> None:
        self._write(record)

    def round(self, log: RoundLog) -> None:
        self._write({"kind": "round", **log.to_dict()})

    def footer(self, duration: float) -> None:
        self._write({"kind": "end", "duration": duration})

    def _write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def load_round_logs(lines: Iterable[str]) -> CampaignReport:
    header = None
    rounds: list[RoundLog] = []
    duration = None
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ReportError(f"line {lineno}: {exc}") from exc
        kind = rec.get("kind")
        if kind == "campaign":
            check_schema(rec)
            header = rec
        elif kind == "round":
            rounds.append(RoundLog.from_dict(rec))
        elif kind == "end":
            duration = rec["duration"]
    if header is None:
        raise ReportError("round log has no campaign header")
    if duration is None:
        # interrupted campaign: report what completed
        duration = sum(r.duration for r in rounds)
    return CampaignReport(
        header["config"], header["fuzzers"], header["initial_stats"], rounds, duration,
        header.get("clock", "virtual"),
    )


def load_report(path: str | Path) -> CampaignReport:
    """Load a JSON report or a JSON-lines round log."""
    return loads_report(Path(path).read_text(encoding="utf-8"))


def loads_report(text: str) -> CampaignReport:
    if not text.strip():
        raise ReportError("empty report")
    stripped = text.lstrip()
    if stripped.startswith("{") and '"kind"' in stripped.splitlines()[0]:
        return load_round_logs(text.splitlines())
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        return load_round_logs(text.splitlines())
    return CampaignReport.from_dict(data)


def compare_table(results: Mapping[str, Sequence[int]], seeds: Sequence[int], baseline: str) -> dict:
    """Per-seed final coverage for each policy and win counts versus ``baseline``."""
    rows = []
    for i, seed in enumerate(seeds):
        rows.append({"seed": seed, **{p: results[p][i] for p in results}})
    wins = {
        p: sum(1 for i in range(len(seeds)) if results[baseline][i] >= results[p][i])
        for p in results if p != baseline
    }
    return {"baseline": baseline, "rows": rows, "baseline_at_least": wins}
