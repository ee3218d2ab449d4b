"""HTTP front end over the orchestrator.

Stateless endpoints wrap the same operations as the command line;
``/campaigns`` runs simulated campaigns as background jobs kept in memory.
"""

from __future__ import annotations

import threading
import uuid

from fastapi import BackgroundTasks, FastAPI, HTTPException, Response

from .. import __version__
from ..callgraph import CallGraphError
from ..campaign import ConfigError
from ..operations import compare, depth_summary, scenario_config, simulate
from ..report import ReportError, emit_report, loads_report
from ..sim import ScenarioError, loads_scenario
from .schemas import (
    CampaignJob, CompareRequest, CompareResponse, DepthsRequest, DepthsResponse, Health,
    RenderRequest, SimulateRequest,
)

app = FastAPI(title="ensemblefuzz", version=__version__)

MEDIA = {"json": "application/json", "csv": "text/csv"}
_jobs: dict[str, CampaignJob] = {}
_jobs_lock = threading.Lock()


def _bad_input(exc: Exception) -> HTTPException:
    return HTTPException(status_code=400, detail=str(exc))


def _scenario(text: str):
    try:
        return loads_scenario(text)
    except Exception as exc:  # TOML syntax errors and ScenarioError alike
        raise _bad_input(exc) from exc


@app.get("/health", response_model=Health)
def health() -> Health:
    return Health(version=__version__)


@app.post("/depths", response_model=DepthsResponse)
def depths(req: DepthsRequest) -> dict:
    try:
        return depth_summary(req.callgraph, req.entries, req.edge_map, req.rho)
    except (CallGraphError, ValueError) as exc:
        raise _bad_input(exc) from exc


@app.post("/simulate")
def simulate_endpoint(req: SimulateRequest) -> Response:
    scenario = _scenario(req.scenario)
    try:
        scenario_config(scenario, req.policy, req.seed, req.rounds, req.units)
    except (ConfigError, ValueError) as exc:
        raise _bad_input(exc) from exc
    report = simulate(scenario, req.policy, req.seed, req.rounds, req.units)
    return Response(emit_report(report, req.format), media_type=MEDIA[req.format])


@app.post("/compare", response_model=CompareResponse)
def compare_endpoint(req: CompareRequest) -> dict:
    scenario = _scenario(req.scenario)
    try:
        table, _ = compare(scenario, list(req.policies), req.seeds, req.baseline, req.rounds, req.units)
    except (ConfigError, ScenarioError, ValueError) as exc:
        raise _bad_input(exc) from exc
    return table


@app.post("/report/render")
def render(req: RenderRequest) -> Response:
    try:
        report = loads_report(req.logs)
    except ReportError as exc:
        raise _bad_input(exc) from exc
    return Response(emit_report(report, req.format), media_type=MEDIA[req.format])


def _run_job(job_id: str) -> None:
    job = _jobs[job_id]
    req = job.request
    job.status = "running"

    def progress(_log) -> None:
        job.rounds_done += 1

    try:
        from ..sim import build_campaign

        scenario = loads_scenario(req.scenario)
        config = scenario_config(scenario, req.policy, req.seed, req.rounds, req.units)
        campaign = build_campaign(scenario, config.policy, config)
        campaign.on_round = progress
        job.report = campaign.run().to_dict()
        job.status = "done"
    except Exception as exc:
        job.error = str(exc)
        job.status = "failed"


@app.post("/campaigns", response_model=CampaignJob, status_code=202)
def start_campaign(req: SimulateRequest, tasks: BackgroundTasks) -> CampaignJob:
    scenario = _scenario(req.scenario)
    try:
        scenario_config(scenario, req.policy, req.seed, req.rounds, req.units)
    except (ConfigError, ValueError) as exc:
        raise _bad_input(exc) from exc
    job = CampaignJob(id=uuid.uuid4().hex, status="queued", request=req)
    with _jobs_lock:
        _jobs[job.id] = job
    tasks.add_task(_run_job, job.id)
    return job


@app.get("/campaigns/{job_id}", response_model=CampaignJob)
def campaign_status(job_id: str) -> CampaignJob:
    job = _jobs.get(job_id)
    if job is None:
        raise HTTPException(status_code=404, detail=f"no campaign {job_id}")
    return job
