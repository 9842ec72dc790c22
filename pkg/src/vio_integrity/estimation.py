"""Weighted least-squares pose estimation from stereo feature tracks.

``linearize`` stacks the per-feature measurement Jacobians, innovations and
information blocks into one linear system; ``wls_solve`` computes the
normal-equation step; ``solve_pose`` iterates Gauss-Newton with a Huber
loss on each feature's weighted squared error, so isolated gross outliers
cannot drag the estimate arbitrarily far.

The robust reweighting exists only here.  Consumers that need the plain
information-weighted system (fault detection, protection levels) call
``linearize`` themselves and work with the unmodified weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .constants import CHI2_3DOF_95
from .errors import DegenerateGeometry, DepthNonPositive, DivergedBehindCamera, NotPositiveDefinite
from .geometry import (DEFAULT_Z_MIN, Landmark, Pose, StereoIntrinsics,
                       camera_points, measurement_jacobians,
                       project_stereo_many, retract)

# Condition-number ceiling for the 6x6 normal matrix.
COND_LIMIT = 1e12

_LM_INITIAL = 1e-4
_LM_GROWTH = 10.0
_LM_ATTEMPTS = 12


@dataclass(frozen=True)
class Observation:
    """One tracked feature: measurement (u, v, d) and its noise covariance."""

    landmark_id: int
    measurement: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        meas = np.array(self.measurement, dtype=float)
        cov = np.array(self.covariance, dtype=float)
        if meas.shape != (3,) or not np.all(np.isfinite(meas)):
            raise ValueError("measurement must be a finite 3-vector")
        if cov.shape != (3, 3) or not np.all(np.isfinite(cov)):
            raise ValueError("covariance must be a finite 3x3 matrix")
        if np.max(np.abs(cov - cov.T)) > 1e-9 * max(1.0, np.max(np.abs(cov))):
            raise ValueError("covariance must be symmetric")
        meas.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "measurement", meas)
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class Frame:
    """All feature observations of one image, keyed by unique landmark ids."""

    observations: tuple[Observation, ...]

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))
        ids = [obs.landmark_id for obs in self.observations]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate landmark ids in frame")

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def landmark_ids(self) -> tuple[int, ...]:
        return tuple(obs.landmark_id for obs in self.observations)


@dataclass(frozen=True)
class StackedSystem:
    """Linearized measurement system for one frame.

    Attributes
    ----------
    jacobian : ndarray, shape (3N, 6)
        Stacked measurement Jacobians.
    information : ndarray, shape (3N, 3N)
        Block-diagonal inverse measurement covariance.
    innovation : ndarray, shape (3N,)
        Measured minus predicted, stacked per feature.
    info_blocks : ndarray, shape (N, 3, 3)
        The diagonal blocks of ``information``.
    landmark_ids : tuple of int
        Feature identities in stacking order.
    """

    jacobian: np.ndarray
    information: np.ndarray
    innovation: np.ndarray
    info_blocks: np.ndarray
    landmark_ids: tuple[int, ...]

    @property
    def n_features(self) -> int:
        return len(self.landmark_ids)


@dataclass(frozen=True)
class SolverConfig:
    """Gauss-Newton settings.

    ``huber_delta`` thresholds each feature's weighted squared error; the
    default is the 95th chi-square(3) percentile so clean Gaussian features
    are left at full weight 95% of the time.
    """

    huber_delta: float = CHI2_3DOF_95
    max_iterations: int = 50
    convergence_tol: float = 1e-10
    z_min: float = DEFAULT_Z_MIN

    def __post_init__(self):
        if self.huber_delta <= 0.0:
            raise ValueError("huber_delta must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.convergence_tol <= 0.0 or self.z_min <= 0.0:
            raise ValueError("convergence_tol and z_min must be positive")


@dataclass(frozen=True)
class SolveResult:
    pose: Pose
    iterations: int
    converged: bool
    objective: float


def _gather(frame: Frame, landmarks: Mapping[int, Landmark]):
    ids = frame.landmark_ids
    missing = [i for i in ids if i not in landmarks]
    if missing:
        raise KeyError(f"landmark ids missing from map: {missing}")
    positions = np.array([landmarks[i].position for i in ids])
    measurements = np.array([obs.measurement for obs in frame.observations])
    covariances = np.array([obs.covariance for obs in frame.observations])
    return ids, positions, measurements, covariances


def _information_blocks(covariances: np.ndarray) -> np.ndarray:
    try:
        np.linalg.cholesky(covariances)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            "an observation covariance is not positive definite") from exc
    blocks = np.linalg.inv(covariances)
    return 0.5 * (blocks + np.swapaxes(blocks, 1, 2))


def linearize(frame: Frame, landmarks: Mapping[int, Landmark], pose: Pose,
              intr: StereoIntrinsics, z_min: float = DEFAULT_Z_MIN) -> StackedSystem:
    """Build the stacked linear system for a frame about a pose.

    Raises
    ------
    DepthNonPositive
        Identifying the first landmark at or behind the depth cutoff.
    KeyError
        If an observation references a landmark missing from the map.
    """
    ids, positions, measurements, covariances = _gather(frame, landmarks)
    pts_cam = camera_points(pose, positions)
    try:
        predicted = project_stereo_many(pts_cam, intr, z_min)
    except DepthNonPositive as exc:
        bad = int(np.flatnonzero(pts_cam[:, 2] <= z_min)[0])
        raise DepthNonPositive(
            f"landmark {ids[bad]} is at depth {pts_cam[bad, 2]:.6g} m, "
            f"at or behind the z_min={z_min:g} m cutoff",
            depth=float(pts_cam[bad, 2]), landmark_id=ids[bad]) from exc
    jac = measurement_jacobians(pose, positions, intr, z_min)
    blocks = _information_blocks(covariances)
    n = len(ids)
    information = np.zeros((3 * n, 3 * n))
    for i in range(n):
        information[3 * i:3 * i + 3, 3 * i:3 * i + 3] = blocks[i]
    return StackedSystem(jacobian=jac.reshape(3 * n, 6),
                         information=information,
                         innovation=(measurements - predicted).reshape(-1),
                         info_blocks=blocks,
                         landmark_ids=ids)


def _normal_matrix(system: StackedSystem) -> tuple[np.ndarray, np.ndarray]:
    weighted_jac = system.information @ system.jacobian
    normal = system.jacobian.T @ weighted_jac
    return normal, weighted_jac


def _check_conditioning(normal: np.ndarray) -> None:
    cond = np.linalg.cond(normal)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise DegenerateGeometry(
            f"normal matrix condition number {cond:.3e} exceeds {COND_LIMIT:g}")


def wls_solve(system: StackedSystem) -> np.ndarray:
    """Weighted least-squares perturbation estimate for a stacked system.

    Raises
    ------
    DegenerateGeometry
        If the normal matrix condition number exceeds COND_LIMIT.
    """
    normal, _ = _normal_matrix(system)
    _check_conditioning(normal)
    rhs = system.jacobian.T @ (system.information @ system.innovation)
    return np.linalg.solve(normal, rhs)


def linear_residual(system: StackedSystem, dx: np.ndarray) -> np.ndarray:
    """Post-fit residual of the linear model at a perturbation estimate."""
    return system.innovation - system.jacobian @ dx


def _prefit_innovations(positions, measurements, pose, intr, z_min):
    pts_cam = camera_points(pose, positions)
    predicted = project_stereo_many(pts_cam, intr, z_min)
    return measurements - predicted


def _robust_objective(innovations, info_blocks, huber_delta):
    s = np.einsum("ni,nij,nj->n", innovations, info_blocks, innovations)
    rho = np.where(s <= huber_delta, s, 2.0 * np.sqrt(huber_delta * s) - huber_delta)
    return float(np.sum(rho)), s


def solve_pose(frame: Frame, landmarks: Mapping[int, Landmark],
               initial_pose: Pose, intr: StereoIntrinsics,
               config: SolverConfig = SolverConfig()) -> SolveResult:
    """Robust pose estimate by iteratively reweighted Gauss-Newton.

    Each feature's contribution is a Huber loss of its weighted squared
    error, so the step equations are the plain normal equations with scalar
    per-feature down-weights.  Steps that would increase the objective are
    retried with growing Levenberg damping; the objective never increases
    across accepted iterations.

    Parameters
    ----------
    frame : Frame
        At least 3 observations, all resolving in ``landmarks``.
    initial_pose : Pose
        Must project every observed landmark at a valid depth.

    Raises
    ------
    DegenerateGeometry
        If the (weighted) normal matrix becomes too ill-conditioned.
    DivergedBehindCamera
        If no damped step can keep every landmark at valid depth.
    """
    if len(frame) < 3:
        raise ValueError(f"need at least 3 observations, got {len(frame)}")
    _, positions, measurements, covariances = _gather(frame, landmarks)
    info_blocks = _information_blocks(covariances)

    pose = initial_pose
    innovations = _prefit_innovations(positions, measurements, pose, intr,
                                      config.z_min)
    objective, sq_errors = _robust_objective(innovations, info_blocks,
                                             config.huber_delta)
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        jac = measurement_jacobians(pose, positions, intr, config.z_min)
        weights = np.where(sq_errors <= config.huber_delta, 1.0,
                           np.sqrt(config.huber_delta / np.maximum(sq_errors, 1e-300)))
        weighted_blocks = weights[:, None, None] * info_blocks
        weighted_jac = np.einsum("nij,njk->nik", weighted_blocks, jac)
        normal = np.einsum("nji,njk->ik", jac, weighted_jac)
        _check_conditioning(normal)
        rhs = np.einsum("nji,nj->i", weighted_jac, innovations)

        damping = 0.0
        diag = np.diag(np.diag(normal))
        step = np.linalg.solve(normal, rhs)
        accepted = False
        behind_camera = False
        for _ in range(_LM_ATTEMPTS):
            behind_camera = False
            try:
                candidate = retract(pose, step)
                cand_innov = _prefit_innovations(positions, measurements,
                                                 candidate, intr, config.z_min)
                cand_obj, cand_sq = _robust_objective(cand_innov, info_blocks,
                                                      config.huber_delta)
            except DepthNonPositive:
                behind_camera = True
                cand_obj = math.inf
            if cand_obj <= objective * (1.0 + 1e-12) + 1e-15:
                accepted = True
                break
            damping = _LM_INITIAL if damping == 0.0 else damping * _LM_GROWTH
            step = np.linalg.solve(normal + damping * diag, rhs)
        if not accepted:
            if behind_camera:
                raise DivergedBehindCamera(
                    "pose iterations pushed a landmark behind the depth cutoff")
            break
        pose, innovations = candidate, cand_innov
        objective, sq_errors = cand_obj, cand_sq
        if float(np.linalg.norm(step)) < config.convergence_tol:
            converged = True
            break
    return SolveResult(pose=pose, iterations=iterations, converged=converged,
                       objective=objective)
