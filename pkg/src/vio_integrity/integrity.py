"""Fault detection, outlier exclusion, and per-axis protection levels.

The linearized measurement model of a frame is tested for consistency with
a parity-space chi-square statistic: the information-weighted sum of squares
of the post-fit residual, compared against a quantile of its fault-free
distribution.  Inconsistent frames go through iterative purge-and-retest
outlier rejection.  Frames that pass get per-axis protection levels: the
largest position error any single-feature fault could induce while keeping
the statistic at the detection threshold, plus a noise term scaled from the
estimator covariance.

All math here uses the raw measurement information; robust reweighting is
confined to the pose solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from .errors import (DegenerateGeometry, DepthNonPositive,
                     DivergedBehindCamera, InsufficientRedundancy,
                     InvalidProbability, NotPositiveDefinite,
                     SingularFaultProjection)
from .estimation import (Frame, SolverConfig, StackedSystem, linear_residual,
                         linearize, solve_pose, wls_solve)
from .geometry import Landmark, Pose, StereoIntrinsics
from .metrics import chi2_quantile, largest_generalized_eigenvalue

# Condition ceiling for a feature's 3x3 restricted residual information.
FAULT_BLOCK_COND_LIMIT = 1e12

_AXES = ("x", "y", "z")


class FrameStatus(str, Enum):
    NOMINAL = "Nominal"
    OUTLIERS_EXCLUDED = "OutliersExcluded"
    UNSAFE = "Unsafe"
    UNMONITORABLE = "Unmonitorable"


@dataclass(frozen=True)
class DetectionConfig:
    """Detector and exclusion settings.

    ``min_inlier_count`` of None applies the default survivor floor
    ``max(6, ceil(N / 2))`` for a frame of N features.
    """

    p_fa: float = 0.05
    k_sigma: float = 3.0
    min_inlier_count: int | None = None
    max_ipsor_rounds: int = 10

    def __post_init__(self):
        if not 0.0 < self.p_fa < 1.0:
            raise InvalidProbability(f"p_fa must lie in (0, 1), got {self.p_fa}")
        if self.k_sigma <= 0.0:
            raise ValueError("k_sigma must be positive")
        if self.min_inlier_count is not None and self.min_inlier_count < 3:
            raise ValueError("min_inlier_count must be >= 3")
        if self.max_ipsor_rounds < 1:
            raise ValueError("max_ipsor_rounds must be >= 1")

    def survivor_floor(self, n_features: int) -> int:
        if self.min_inlier_count is not None:
            return self.min_inlier_count
        return max(6, math.ceil(0.5 * n_features))


def weighted_rss(residual: np.ndarray, information: np.ndarray) -> float:
    """Information-weighted residual sum of squares."""
    residual = np.asarray(residual, dtype=float)
    return float(residual @ information @ residual)


def feature_contributions(residual: np.ndarray,
                          info_blocks: np.ndarray) -> np.ndarray:
    """Each feature's share of the weighted residual sum of squares."""
    per_feature = np.asarray(residual, dtype=float).reshape(-1, 3)
    return np.einsum("ni,nij,nj->n", per_feature, info_blocks, per_feature)


def detection_threshold(n_features: int, p_fa: float) -> float:
    """Chi-square consistency threshold for a frame of ``n_features``.

    Raises
    ------
    InsufficientRedundancy
        If the residual has no degrees of freedom (3N - 6 < 1).
    """
    dof = 3 * n_features - 6
    if dof < 1:
        raise InsufficientRedundancy(
            f"{n_features} features leave {dof} residual dof; need >= 1")
    return chi2_quantile(dof, 1.0 - p_fa)


@dataclass(frozen=True)
class DetectionResult:
    weighted_rss: float
    threshold: float
    consistent: bool


def _linear_test(system: StackedSystem, config: DetectionConfig):
    dx = wls_solve(system)
    eps = linear_residual(system, dx)
    lam = weighted_rss(eps, system.information)
    delta = detection_threshold(system.n_features, config.p_fa)
    return lam, delta, eps


def detect(system: StackedSystem,
           config: DetectionConfig = DetectionConfig()) -> DetectionResult:
    """Consistency test of a stacked system at its own WLS solution."""
    lam, delta, _ = _linear_test(system, config)
    return DetectionResult(weighted_rss=lam, threshold=delta,
                           consistent=lam <= delta)


@dataclass(frozen=True)
class IpsorResult:
    """Outcome of iterative purge-and-retest exclusion.

    ``frame``, ``pose`` and ``system`` describe the survivor set at exit;
    for UNMONITORABLE exits they reflect the state at bailout.
    """

    frame: Frame
    outlier_ids: tuple[int, ...]
    weighted_rss: float
    threshold: float
    status: FrameStatus
    pose: Pose
    system: StackedSystem
    rounds: int


def ipsor(frame: Frame, landmarks: Mapping[int, Landmark], pose: Pose,
          intr: StereoIntrinsics, config: DetectionConfig = DetectionConfig(),
          solver_config: SolverConfig = SolverConfig()) -> IpsorResult:
    """Iteratively remove the worst residual contributors until consistent.

    Purge loop: at the given linearization pose, drop the feature with the
    largest residual contribution (ties to the lowest stacking index), refit
    the linear solution on the survivors, and recompute the statistic and
    the threshold before testing again.  Outer loop: re-solve the pose on
    the survivors, rebuild the system, recompute the exact statistic, and
    stop once it passes.

    Exits UNSAFE when survivors drop below the configured floor (or the
    round budget runs out while still inconsistent), UNMONITORABLE when a
    removal would leave the residual with no degrees of freedom.
    """
    survivors = list(frame.observations)
    floor = config.survivor_floor(len(survivors))
    removed: list[int] = []
    system = linearize(frame, landmarks, pose, intr, solver_config.z_min)
    lam, delta, eps = _linear_test(system, config)
    rounds = 0
    status: FrameStatus | None = None
    while lam > delta:
        if rounds >= config.max_ipsor_rounds:
            status = FrameStatus.UNSAFE
            break
        rounds += 1
        while lam > delta:
            contributions = feature_contributions(eps, system.info_blocks)
            worst = int(np.argmax(contributions))
            if 3 * (len(survivors) - 1) - 6 < 1:
                return IpsorResult(frame=Frame(tuple(survivors)),
                                   outlier_ids=tuple(removed),
                                   weighted_rss=lam, threshold=delta,
                                   status=FrameStatus.UNMONITORABLE,
                                   pose=pose, system=system, rounds=rounds)
            removed.append(survivors[worst].landmark_id)
            del survivors[worst]
            system = linearize(Frame(tuple(survivors)), landmarks, pose, intr,
                               solver_config.z_min)
            lam, delta, eps = _linear_test(system, config)
            if len(survivors) < floor:
                status = FrameStatus.UNSAFE
                break
        if status is not None:
            break
        if lam <= delta and removed:
            solved = solve_pose(Frame(tuple(survivors)), landmarks, pose, intr,
                                solver_config)
            pose = solved.pose
            system = linearize(Frame(tuple(survivors)), landmarks, pose, intr,
                               solver_config.z_min)
            lam, delta, eps = _linear_test(system, config)
    if status is None:
        status = FrameStatus.OUTLIERS_EXCLUDED if removed else FrameStatus.NOMINAL
    return IpsorResult(frame=Frame(tuple(survivors)), outlier_ids=tuple(removed),
                       weighted_rss=lam, threshold=delta, status=status,
                       pose=pose, system=system, rounds=rounds)


def residual_information(system: StackedSystem) -> np.ndarray:
    """Information-weighted residual projector ``W - W H N^-1 H^T W`` with
    ``N = H^T W H``; the quadratic form of the post-fit residual statistic."""
    weighted_jac = system.information @ system.jacobian
    normal = system.jacobian.T @ weighted_jac
    cond = np.linalg.cond(normal)
    if not np.isfinite(cond) or cond > 1e12:
        raise DegenerateGeometry(
            f"normal matrix condition number {cond:.3e} exceeds 1e+12")
    solved = np.linalg.solve(normal, weighted_jac.T)
    s = system.information - weighted_jac @ solved
    return 0.5 * (s + s.T)


def solution_influence(system: StackedSystem, axis: int) -> np.ndarray:
    """Gradient of the WLS estimate's given translation axis wrt the stacked
    measurements; the rank-one factor of the fault-to-error quadratic."""
    weighted_jac = system.information @ system.jacobian
    normal = system.jacobian.T @ weighted_jac
    basis = np.zeros(6)
    basis[axis] = 1.0
    return weighted_jac @ np.linalg.solve(normal, basis)


def _fault_error_squared(s_block: np.ndarray, u_block: np.ndarray,
                         threshold: float) -> float:
    cond = np.linalg.cond(s_block)
    if not np.isfinite(cond) or cond > FAULT_BLOCK_COND_LIMIT:
        raise SingularFaultProjection(
            f"restricted residual information condition {cond:.3e} "
            f"exceeds {FAULT_BLOCK_COND_LIMIT:g}")
    lam_max = largest_generalized_eigenvalue(np.outer(u_block, u_block), s_block)
    assert lam_max >= -1e-12, "fault-error eigenvalue must be nonnegative"
    return max(lam_max, 0.0) * threshold


def fault_induced_error(system: StackedSystem, threshold: float, axis: int,
                        feature_index: int) -> float:
    """Largest translation error along ``axis`` a fault on one feature can
    cause while the residual statistic stays at ``threshold``.

    Raises
    ------
    SingularFaultProjection
        If the feature's restricted residual information is too close to
        singular for the constrained maximization to be meaningful.
    """
    s = residual_information(system)
    u = solution_influence(system, axis)
    rows = slice(3 * feature_index, 3 * feature_index + 3)
    try:
        err_sq = _fault_error_squared(s[rows, rows], u[rows], threshold)
    except NotPositiveDefinite as exc:
        raise SingularFaultProjection(
            "restricted residual information is not positive definite") from exc
    return math.sqrt(err_sq)


@dataclass(frozen=True)
class AxisBound:
    """Protection level for one translation axis: worst undetected
    single-feature fault effect plus the k-sigma noise term."""

    axis: str
    eps_f: float
    eps_n: float
    pl: float
    worst_feature_id: int
    sigma: float


@dataclass(frozen=True)
class ProtectionLevels:
    bounds: tuple[AxisBound, ...]
    singular_skips: int


def protection_level(system: StackedSystem, threshold: float,
                     config: DetectionConfig = DetectionConfig()) -> ProtectionLevels:
    """Per-axis protection levels of a consistent stacked system.

    Scans every feature as the fault hypothesis, maximizing the induced
    error on the detection-threshold surface; features with a singular
    restricted residual information are skipped and counted.

    Raises
    ------
    SingularFaultProjection
        If no feature at all admits the maximization for some axis.
    DegenerateGeometry
        If the normal matrix is too ill-conditioned.
    """
    s = residual_information(system)
    weighted_jac = system.information @ system.jacobian
    normal = system.jacobian.T @ weighted_jac
    covariance = np.linalg.solve(normal, np.eye(6))
    sigmas = np.sqrt(np.maximum(np.diag(covariance)[:3], 0.0))

    bounds = []
    skips = 0
    n = system.n_features
    for axis in range(3):
        influence = weighted_jac @ covariance[:, axis]
        best = -np.inf
        best_id = None
        for j in range(n):
            rows = slice(3 * j, 3 * j + 3)
            try:
                err_sq = _fault_error_squared(s[rows, rows], influence[rows],
                                              threshold)
            except (SingularFaultProjection, NotPositiveDefinite):
                skips += 1
                continue
            if err_sq > best:
                best = err_sq
                best_id = system.landmark_ids[j]
        if best_id is None:
            raise SingularFaultProjection(
                "no feature admits the fault maximization on axis "
                + _AXES[axis])
        eps_f = math.sqrt(best)
        eps_n = config.k_sigma * float(sigmas[axis])
        bounds.append(AxisBound(axis=_AXES[axis], eps_f=eps_f, eps_n=eps_n,
                                pl=eps_f + eps_n, worst_feature_id=best_id,
                                sigma=float(sigmas[axis])))
    return ProtectionLevels(bounds=tuple(bounds), singular_skips=skips)


@dataclass(frozen=True)
class IntegrityReport:
    """Per-frame verdict: status, test numbers, feature partition, final
    pose, and protection levels (empty unless the frame passed)."""

    status: FrameStatus
    weighted_rss: float
    threshold: float
    test_statistic: float
    inlier_ids: tuple[int, ...]
    outlier_ids: tuple[int, ...]
    pose: Pose
    axis_bounds: tuple[AxisBound, ...]
    singular_skips: int = 0
    ipsor_rounds: int = 0
    reason: str = ""


def _unmonitorable(frame: Frame, pose: Pose, reason: str,
                   lam: float = math.nan, delta: float = math.nan,
                   outliers: tuple[int, ...] = (), rounds: int = 0) -> IntegrityReport:
    inliers = tuple(i for i in frame.landmark_ids if i not in set(outliers))
    stat = math.sqrt(lam) if math.isfinite(lam) and lam >= 0.0 else math.nan
    return IntegrityReport(status=FrameStatus.UNMONITORABLE, weighted_rss=lam,
                           threshold=delta, test_statistic=stat,
                           inlier_ids=inliers, outlier_ids=outliers, pose=pose,
                           axis_bounds=(), ipsor_rounds=rounds, reason=reason)


def monitor_frame(frame: Frame, landmarks: Mapping[int, Landmark],
                  initial_pose: Pose, intr: StereoIntrinsics,
                  config: DetectionConfig = DetectionConfig(),
                  solver_config: SolverConfig = SolverConfig()) -> IntegrityReport:
    """Full single-frame pipeline: robust solve, consistency test, outlier
    exclusion if needed, and protection levels for frames that pass.

    Numerical failures (degenerate geometry, divergence, depth cutoff at
    the initial pose, no usable fault projection) yield an UNMONITORABLE
    report with the reason recorded instead of raising.
    """
    if len(frame) < 3:
        return _unmonitorable(frame, initial_pose,
                              f"{len(frame)} observations; need >= 3")
    try:
        solved = solve_pose(frame, landmarks, initial_pose, intr, solver_config)
        system = linearize(frame, landmarks, solved.pose, intr,
                           solver_config.z_min)
        lam, delta, _ = _linear_test(system, config)
        if lam <= delta:
            status = FrameStatus.NOMINAL
            final_frame, final_pose, final_system = frame, solved.pose, system
            outliers: tuple[int, ...] = ()
            rounds = 0
        else:
            excl = ipsor(frame, landmarks, solved.pose, intr, config,
                         solver_config)
            if excl.status is FrameStatus.UNMONITORABLE:
                return _unmonitorable(frame, excl.pose,
                                      "exclusion exhausted residual dof",
                                      lam=excl.weighted_rss,
                                      delta=excl.threshold,
                                      outliers=excl.outlier_ids,
                                      rounds=excl.rounds)
            if excl.status is FrameStatus.UNSAFE:
                return IntegrityReport(
                    status=FrameStatus.UNSAFE, weighted_rss=excl.weighted_rss,
                    threshold=excl.threshold,
                    test_statistic=math.sqrt(max(excl.weighted_rss, 0.0)),
                    inlier_ids=excl.frame.landmark_ids,
                    outlier_ids=excl.outlier_ids, pose=excl.pose,
                    axis_bounds=(), ipsor_rounds=excl.rounds,
                    reason="too many outliers; position is unsafe")
            status = excl.status
            final_frame, final_pose, final_system = excl.frame, excl.pose, excl.system
            lam, delta = excl.weighted_rss, excl.threshold
            outliers = excl.outlier_ids
            rounds = excl.rounds
        levels = protection_level(final_system, delta, config)
    except (DegenerateGeometry, DivergedBehindCamera, DepthNonPositive,
            SingularFaultProjection, InsufficientRedundancy) as exc:
        return _unmonitorable(frame, initial_pose,
                              f"{type(exc).__name__}: {exc}")
    return IntegrityReport(status=status, weighted_rss=lam, threshold=delta,
                           test_statistic=math.sqrt(max(lam, 0.0)),
                           inlier_ids=final_frame.landmark_ids,
                           outlier_ids=outliers, pose=final_pose,
                           axis_bounds=levels.bounds,
                           singular_skips=levels.singular_skips,
                           ipsor_rounds=rounds)
