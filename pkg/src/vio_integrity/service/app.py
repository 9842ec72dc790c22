"""FastAPI application exposing the monitoring pipeline over HTTP.

Core errors derive from ``VioIntegrityError``; one handler maps them all
to 422 with the error class name, so clients can branch on category
without parsing message text.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import ConfigError, VioIntegrityError
from ..geometry import Pose
from ..harness.summary import summarize
from ..integrity import monitor_frame
from ..metrics import RbtConfig, ideal_bound, solve_tau
from ..simulation import run_monte_carlo
from .schemas import (CdfRowModel, MonitorRequest, MonitorResponse,
                      ReportModel, SimulateRequest, SimulateResponse,
                      SummarizeRequest, SummarizeResponse, SummaryRowModel,
                      TauRequest, TauResponse, TrialModel)


def create_app() -> FastAPI:
    app = FastAPI(title="vio-integrity", version=__version__)

    @app.exception_handler(VioIntegrityError)
    async def core_error(request: Request, exc: VioIntegrityError):
        return JSONResponse(status_code=422,
                            content={"category": type(exc).__name__,
                                     "detail": str(exc)})

    @app.get("/health")
    def health() -> dict[str, str]:
        return {"status": "ok", "version": __version__}

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest) -> SimulateResponse:
        records = run_monte_carlo(req.scenario.to_core(),
                                  detection=req.detection.to_core(),
                                  solver=req.solver.to_core(),
                                  max_workers=req.workers)
        return SimulateResponse(
            trials=[TrialModel.from_record(r) for r in records])

    @app.post("/monitor", response_model=MonitorResponse)
    def monitor(req: MonitorRequest) -> MonitorResponse:
        landmarks = {lm.landmark_id: lm.to_core() for lm in req.landmarks}
        for index, frame_model in enumerate(req.frames):
            unknown = {obs.landmark_id for obs in frame_model.observations}
            unknown -= set(landmarks)
            if unknown:
                raise ConfigError(f"frame {index} references landmark ids "
                                  f"missing from the map: {sorted(unknown)}")
        intr = req.intr.to_core()
        detection = req.detection.to_core()
        solver = req.solver.to_core()
        pose = Pose(translation=np.array(req.initial_translation),
                    rotation=np.eye(3))
        reports = []
        for index, frame_model in enumerate(req.frames):
            rep = monitor_frame(frame_model.to_core(), landmarks, pose, intr,
                                config=detection, solver_config=solver)
            reports.append(ReportModel.from_core(index, rep))
            if rep.axis_bounds:
                pose = rep.pose
        return MonitorResponse(reports=reports)

    @app.post("/summarize", response_model=SummarizeResponse)
    def summarize_trials(req: SummarizeRequest) -> SummarizeResponse:
        report = summarize([row.to_core() for row in req.trials],
                           rbt_config=RbtConfig(p_d=req.p_d))
        rows = [SummaryRowModel(axis=r.axis, method=r.method,
                                bounding_rate=r.bounding_rate, rbt=r.rbt,
                                n=r.n) for r in report.rows]
        cdf = [CdfRowModel(method=r.method, axis=r.axis, diff=r.diff,
                           cum_fraction=r.cum_fraction) for r in report.cdf]
        return SummarizeResponse(rows=rows, cdf=cdf, tau=report.tau)

    @app.post("/tau", response_model=TauResponse)
    def tau(req: TauRequest) -> TauResponse:
        return TauResponse(p_d=req.p_d, tau=solve_tau(req.p_d),
                           minimizer=ideal_bound(req.p_d))

    return app
