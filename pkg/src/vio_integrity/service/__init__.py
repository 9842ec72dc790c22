from .app import create_app
from .schemas import (AxisBoundModel, CdfRowModel, DetectionModel, FrameModel,
                      IntrinsicsModel, LandmarkModel, MonitorRequest,
                      MonitorResponse, ObservationModel, ReportModel,
                      ScenarioModel, SimulateRequest, SimulateResponse,
                      SolverModel, SummarizeRequest, SummarizeResponse,
                      SummaryRowModel, TauRequest, TauResponse, TrialModel,
                      TrialRowModel)

__all__ = [
    "AxisBoundModel", "CdfRowModel", "DetectionModel", "FrameModel",
    "IntrinsicsModel", "LandmarkModel", "MonitorRequest", "MonitorResponse",
    "ObservationModel", "ReportModel", "ScenarioModel", "SimulateRequest",
    "SimulateResponse", "SolverModel", "SummarizeRequest",
    "SummarizeResponse", "SummaryRowModel", "TauRequest", "TauResponse",
    "TrialModel", "TrialRowModel", "create_app",
]
