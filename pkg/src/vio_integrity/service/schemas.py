"""Pydantic request/response models for the HTTP service.

Each request model carries a ``to_core`` method that builds the
corresponding core dataclass.  Validation of physical constraints
(positive depths, probability ranges, ...) lives in the core
constructors; models here only pin types and shapes so that malformed
JSON fails fast with a 422 before any numerics run.
"""

from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, Field

from ..estimation import Frame, Observation, SolverConfig
from ..geometry import Landmark, StereoIntrinsics
from ..harness.io import FrameLogRecord
from ..integrity import AxisBound, DetectionConfig, IntegrityReport
from ..simulation import DEFAULT_INTRINSICS, ScenarioConfig, TrialRecord

Vec3 = tuple[float, float, float]


def _none_if_nan(value: float) -> float | None:
    return None if not math.isfinite(value) else value


class IntrinsicsModel(BaseModel):
    fu: float = Field(default=DEFAULT_INTRINSICS.fu, gt=0)
    fv: float = Field(default=DEFAULT_INTRINSICS.fv, gt=0)
    cu: float = Field(default=DEFAULT_INTRINSICS.cu, gt=0)
    cv: float = Field(default=DEFAULT_INTRINSICS.cv, gt=0)
    baseline: float = Field(default=DEFAULT_INTRINSICS.baseline, gt=0)

    def to_core(self) -> StereoIntrinsics:
        return StereoIntrinsics(fu=self.fu, fv=self.fv, cu=self.cu,
                                cv=self.cv, baseline=self.baseline)


class DetectionModel(BaseModel):
    p_fa: float = 0.05
    k_sigma: float = 3.0
    min_inlier_count: int | None = None
    max_ipsor_rounds: int = 10

    def to_core(self) -> DetectionConfig:
        return DetectionConfig(p_fa=self.p_fa, k_sigma=self.k_sigma,
                               min_inlier_count=self.min_inlier_count,
                               max_ipsor_rounds=self.max_ipsor_rounds)


class SolverModel(BaseModel):
    huber_delta: float = SolverConfig.huber_delta
    max_iterations: int = SolverConfig.max_iterations
    convergence_tol: float = SolverConfig.convergence_tol
    z_min: float = SolverConfig.z_min

    def to_core(self) -> SolverConfig:
        return SolverConfig(huber_delta=self.huber_delta,
                            max_iterations=self.max_iterations,
                            convergence_tol=self.convergence_tol,
                            z_min=self.z_min)


class ScenarioModel(BaseModel):
    """Monte Carlo scenario; mirrors the simulation config field for field."""

    seed: int = Field(ge=0)
    n_landmarks: int = 50
    depth_range: tuple[float, float] = (2.0, 20.0)
    n_frames: int = 100
    trajectory: str | list[Vec3] = "static"
    pixel_sigma_base: float = 1.0
    sigma_levels: list[float] = [1.0]
    outlier_rate: float = 0.0
    outlier_magnitude: tuple[float, float] = (30.0, 100.0)
    intr: IntrinsicsModel = IntrinsicsModel()

    def to_core(self) -> ScenarioConfig:
        traj = (self.trajectory if isinstance(self.trajectory, str)
                else tuple(tuple(w) for w in self.trajectory))
        return ScenarioConfig(seed=self.seed, n_landmarks=self.n_landmarks,
                              depth_range=tuple(self.depth_range),
                              n_frames=self.n_frames, trajectory=traj,
                              pixel_sigma_base=self.pixel_sigma_base,
                              sigma_levels=tuple(self.sigma_levels),
                              outlier_rate=self.outlier_rate,
                              outlier_magnitude=tuple(self.outlier_magnitude),
                              intr=self.intr.to_core())


class TrialModel(BaseModel):
    """One simulated frame outcome.  Error/bound fields are null when the
    frame was not monitored (Unsafe or Unmonitorable)."""

    frame_index: int
    true_error: Vec3 | None
    pl: Vec3 | None
    three_sigma: Vec3 | None
    sigma: Vec3 | None
    status: str
    injected_outlier_ids: list[int]
    removed_ids: list[int]

    @classmethod
    def from_record(cls, rec: TrialRecord) -> "TrialModel":
        return cls(frame_index=rec.frame_index,
                   true_error=rec.true_error, pl=rec.pl,
                   three_sigma=rec.three_sigma, sigma=rec.sigma,
                   status=rec.status.value,
                   injected_outlier_ids=list(rec.injected_outlier_ids),
                   removed_ids=list(rec.removed_ids))


class SimulateRequest(BaseModel):
    scenario: ScenarioModel
    detection: DetectionModel = DetectionModel()
    solver: SolverModel = SolverModel()
    workers: int | None = None


class SimulateResponse(BaseModel):
    trials: list[TrialModel]


class ObservationModel(BaseModel):
    """Stereo measurement (u, v, d) with its upper-triangular covariance
    (q11, q12, q13, q22, q23, q33)."""

    landmark_id: int
    measurement: Vec3
    covariance: tuple[float, float, float, float, float, float]

    def to_core(self) -> Observation:
        q11, q12, q13, q22, q23, q33 = self.covariance
        cov = np.array([[q11, q12, q13], [q12, q22, q23], [q13, q23, q33]])
        return Observation(landmark_id=self.landmark_id,
                           measurement=np.array(self.measurement),
                           covariance=cov)


class FrameModel(BaseModel):
    observations: list[ObservationModel]

    def to_core(self) -> Frame:
        return Frame(tuple(obs.to_core() for obs in self.observations))


class LandmarkModel(BaseModel):
    landmark_id: int
    position: Vec3

    def to_core(self) -> Landmark:
        return Landmark(id=self.landmark_id, position=np.array(self.position))


class MonitorRequest(BaseModel):
    landmarks: list[LandmarkModel]
    frames: list[FrameModel]
    intr: IntrinsicsModel = IntrinsicsModel()
    initial_translation: Vec3 = (0.0, 0.0, 0.0)
    detection: DetectionModel = DetectionModel()
    solver: SolverModel = SolverModel()


class AxisBoundModel(BaseModel):
    axis: str
    eps_f: float
    eps_n: float
    pl: float
    worst_feature_id: int
    sigma: float

    @classmethod
    def from_core(cls, bound: AxisBound) -> "AxisBoundModel":
        return cls(axis=bound.axis, eps_f=bound.eps_f, eps_n=bound.eps_n,
                   pl=bound.pl, worst_feature_id=bound.worst_feature_id,
                   sigma=bound.sigma)


class ReportModel(BaseModel):
    """Per-frame integrity verdict.  Test numbers are null when the frame
    never reached the consistency test."""

    frame_index: int
    status: str
    weighted_rss: float | None
    threshold: float | None
    test_statistic: float | None
    translation: Vec3
    inlier_ids: list[int]
    outlier_ids: list[int]
    axis_bounds: list[AxisBoundModel]
    ipsor_rounds: int
    reason: str

    @classmethod
    def from_core(cls, index: int, rep: IntegrityReport) -> "ReportModel":
        return cls(frame_index=index, status=rep.status.value,
                   weighted_rss=_none_if_nan(rep.weighted_rss),
                   threshold=_none_if_nan(rep.threshold),
                   test_statistic=_none_if_nan(rep.test_statistic),
                   translation=tuple(rep.pose.translation),
                   inlier_ids=list(rep.inlier_ids),
                   outlier_ids=list(rep.outlier_ids),
                   axis_bounds=[AxisBoundModel.from_core(b)
                                for b in rep.axis_bounds],
                   ipsor_rounds=rep.ipsor_rounds, reason=rep.reason)


class MonitorResponse(BaseModel):
    reports: list[ReportModel]


class TrialRowModel(BaseModel):
    """One per-axis sample for summary statistics, matching a row of the
    trials CSV."""

    frame: int
    axis: str
    error: float
    pl: float
    three_sigma: float
    sigma: float
    status: str

    def to_core(self) -> FrameLogRecord:
        return FrameLogRecord(frame_index=self.frame, axis=self.axis,
                              error=self.error, pl=self.pl,
                              three_sigma=self.three_sigma, sigma=self.sigma,
                              status=self.status)


class SummaryRowModel(BaseModel):
    axis: str
    method: str
    bounding_rate: float
    rbt: float
    n: int


class CdfRowModel(BaseModel):
    method: str
    axis: str
    diff: float
    cum_fraction: float


class SummarizeRequest(BaseModel):
    trials: list[TrialRowModel]
    p_d: float = 0.9973


class SummarizeResponse(BaseModel):
    rows: list[SummaryRowModel]
    cdf: list[CdfRowModel]
    tau: float


class TauRequest(BaseModel):
    p_d: float = 0.9973


class TauResponse(BaseModel):
    p_d: float
    tau: float
    minimizer: float
