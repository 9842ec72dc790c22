"""Synthetic stereo campaigns with labeled outlier injection.

Scenes are boxes of landmarks sampled inside the stereo frustum shared by
every trajectory pose.  Frames add per-feature Gaussian pixel noise whose
covariance matches the one handed to the estimator, plus optional
uniform-direction offsets standing in for association failures; the
injected feature ids are returned so exclusion quality is measurable.
Campaigns run the full monitoring pipeline per frame and record the
per-axis error, protection level, and the plain three-sigma baseline.

Determinism: a campaign with seed ``s`` derives one child seed per frame
(plus one for the scene) from ``numpy.random.SeedSequence(s)``, so results
are bit-identical regardless of worker count or execution order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, InfeasibleScene
from .estimation import Frame, Observation, SolverConfig
from .geometry import (Landmark, Pose, StereoIntrinsics, camera_points,
                       identity_pose, project_stereo_many, retract)
from .integrity import (DetectionConfig, FrameStatus, IntegrityReport,
                        monitor_frame)

DEFAULT_INTRINSICS = StereoIntrinsics(fu=435.2, fv=435.2, cu=367.4, cv=252.2,
                                      baseline=0.11)

# Initial-guess offset applied to the true pose before each solve: 0.05 m of
# translation and 0.02 rad of rotation, split evenly across the three axes.
INIT_PERTURBATION = np.concatenate([np.full(3, 0.05 / np.sqrt(3.0)),
                                    np.full(3, 0.02 / np.sqrt(3.0))])

_SCENE_ATTEMPTS = 1000
_AXES = ("x", "y", "z")


@dataclass(frozen=True)
class ScenarioConfig:
    """Campaign description: scene, trajectory, noise, and injection model."""

    seed: int
    n_landmarks: int = 50
    depth_range: tuple[float, float] = (2.0, 20.0)
    n_frames: int = 100
    trajectory: str | tuple[tuple[float, float, float], ...] = "static"
    pixel_sigma_base: float = 1.0
    sigma_levels: tuple[float, ...] = (1.0,)
    outlier_rate: float = 0.0
    outlier_magnitude: tuple[float, float] = (30.0, 100.0)
    intr: StereoIntrinsics = field(default=DEFAULT_INTRINSICS)

    def __post_init__(self) -> None:
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if self.n_landmarks < 6:
            raise ConfigError(f"n_landmarks must be >= 6, got {self.n_landmarks}")
        if self.n_frames < 1:
            raise ConfigError(f"n_frames must be >= 1, got {self.n_frames}")
        near, far = self.depth_range
        if not (0.0 < near < far):
            raise ConfigError(f"depth_range must satisfy 0 < near < far, got {self.depth_range}")
        if not 0.0 <= self.outlier_rate < 1.0:
            raise ConfigError(f"outlier_rate must lie in [0, 1), got {self.outlier_rate}")
        low, high = self.outlier_magnitude
        if not (0.0 <= low <= high):
            raise ConfigError(
                f"outlier_magnitude must satisfy 0 <= low <= high, got {self.outlier_magnitude}")
        if self.pixel_sigma_base <= 0.0:
            raise ConfigError(f"pixel_sigma_base must be positive, got {self.pixel_sigma_base}")
        if len(self.sigma_levels) == 0 or any(s <= 0.0 for s in self.sigma_levels):
            raise ConfigError(f"sigma_levels must be nonempty positives, got {self.sigma_levels}")
        if isinstance(self.trajectory, str):
            if self.trajectory != "static":
                raise ConfigError(f"trajectory must be 'static' or waypoints, got {self.trajectory!r}")
        else:
            waypoints = tuple(tuple(float(c) for c in w) for w in self.trajectory)
            if len(waypoints) == 0 or any(len(w) != 3 for w in waypoints):
                raise ConfigError("trajectory waypoints must be (x, y, z) triples")
            object.__setattr__(self, "trajectory", waypoints)


@dataclass(frozen=True)
class TrialRecord:
    """One monitored frame: per-axis truth gap, bounds, and bookkeeping.

    The numeric arrays are ordered (x, y, z) and are ``None`` for frames the
    monitor refused (Unsafe or Unmonitorable).
    """

    frame_index: int
    true_error: np.ndarray | None
    pl: np.ndarray | None
    three_sigma: np.ndarray | None
    sigma: np.ndarray | None
    status: FrameStatus
    injected_outlier_ids: tuple[int, ...]
    removed_ids: tuple[int, ...]

    @property
    def monitored(self) -> bool:
        return self.true_error is not None


def trajectory_poses(cfg: ScenarioConfig) -> tuple[Pose, ...]:
    """Ground-truth pose per frame.

    ``static`` repeats the identity pose.  A waypoint list is traversed with
    piecewise-linear interpolation, uniform in parameter rather than arc
    length, keeping the identity orientation throughout.
    """
    if cfg.trajectory == "static":
        return (identity_pose(),) * cfg.n_frames
    waypoints = np.asarray(cfg.trajectory, dtype=float)
    if len(waypoints) == 1 or cfg.n_frames == 1:
        positions = np.repeat(waypoints[:1], cfg.n_frames, axis=0)
    else:
        station = np.linspace(0.0, len(waypoints) - 1.0, cfg.n_frames)
        segment = np.minimum(station.astype(int), len(waypoints) - 2)
        blend = (station - segment)[:, None]
        positions = (1.0 - blend) * waypoints[segment] + blend * waypoints[segment + 1]
    eye = np.eye(3)
    return tuple(Pose(rotation=eye, translation=p) for p in positions)


def _visible_everywhere(position: np.ndarray, poses: Sequence[Pose],
                        cfg: ScenarioConfig) -> bool:
    near, far = cfg.depth_range
    for pose in poses:
        cam = camera_points(pose, position[None, :])[0]
        if not near <= cam[2] <= far:
            return False
        u, v, _ = project_stereo_many(cam[None, :], cfg.intr)[0]
        if not (0.0 <= u <= 2.0 * cfg.intr.cu and 0.0 <= v <= 2.0 * cfg.intr.cv):
            return False
    return True


def generate_scene(cfg: ScenarioConfig) -> tuple[dict[int, Landmark], tuple[Pose, ...]]:
    """Sample landmarks visible from every trajectory pose.

    Candidates are drawn in the first pose's camera: pixel position uniform
    over the image box ``[0, 2*cu] x [0, 2*cv]``, depth uniform over
    ``depth_range``.  A candidate is kept once it projects inside the box
    with an in-range depth at every pose.

    Raises
    ------
    InfeasibleScene
        If some landmark fails the visibility check 1000 times in a row.
    """
    poses = trajectory_poses(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    first = poses[0]
    landmarks: dict[int, Landmark] = {}
    near, far = cfg.depth_range
    for lid in range(cfg.n_landmarks):
        for _ in range(_SCENE_ATTEMPTS):
            u = rng.uniform(0.0, 2.0 * cfg.intr.cu)
            v = rng.uniform(0.0, 2.0 * cfg.intr.cv)
            z = rng.uniform(near, far)
            cam = np.array([(u - cfg.intr.cu) * z / cfg.intr.fu,
                            (v - cfg.intr.cv) * z / cfg.intr.fv, z])
            position = first.rotation.T @ cam + first.translation
            if _visible_everywhere(position, poses, cfg):
                landmarks[lid] = Landmark(lid, position)
                break
        else:
            raise InfeasibleScene(
                f"landmark {lid} found no placement visible from all "
                f"{len(poses)} poses in {_SCENE_ATTEMPTS} attempts")
    return landmarks, poses


def synthesize_frame(pose: Pose, landmarks: Mapping[int, Landmark],
                     cfg: ScenarioConfig,
                     frame_seed: int | np.random.SeedSequence,
                     ) -> tuple[Frame, tuple[int, ...]]:
    """Measure every landmark from ``pose`` with noise and labeled outliers.

    Per feature, in a fixed draw order from ``frame_seed``: a sigma level is
    picked uniformly from ``sigma_levels``, Gaussian noise with covariance
    ``sigma^2 diag(1, 1, 2)`` is added, and with probability ``outlier_rate``
    the measurement is shifted by a uniformly random direction in (u, v, d)
    scaled by a magnitude uniform over ``outlier_magnitude``.  The assigned
    covariance is attached to the observation, so inlier whitened residuals
    are standard normal by construction.
    """
    rng = np.random.default_rng(frame_seed)
    ids = sorted(landmarks)
    positions = np.array([landmarks[i].position for i in ids])
    clean = project_stereo_many(camera_points(pose, positions), cfg.intr)
    n = len(ids)
    sigma = cfg.pixel_sigma_base * rng.choice(np.asarray(cfg.sigma_levels), size=n)
    noise = rng.standard_normal((n, 3)) * sigma[:, None] * np.array([1.0, 1.0, np.sqrt(2.0)])
    mask = rng.random(n) < cfg.outlier_rate
    magnitude = rng.uniform(cfg.outlier_magnitude[0], cfg.outlier_magnitude[1], size=n)
    direction = rng.standard_normal((n, 3))
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-300)
    measured = clean + noise + np.where(mask[:, None], magnitude[:, None] * direction, 0.0)
    observations = tuple(
        Observation(lid, measured[k],
                    sigma[k] ** 2 * np.diag([1.0, 1.0, 2.0]))
        for k, lid in enumerate(ids))
    injected = tuple(lid for k, lid in enumerate(ids) if mask[k])
    return Frame(observations), injected


def _record_from_report(index: int, report: IntegrityReport, truth: Pose,
                        injected: tuple[int, ...]) -> TrialRecord:
    if report.status in (FrameStatus.NOMINAL, FrameStatus.OUTLIERS_EXCLUDED):
        error = np.abs(report.pose.translation - truth.translation)
        pl = np.array([b.pl for b in report.axis_bounds])
        sigma = np.array([b.sigma for b in report.axis_bounds])
        three_sigma = 3.0 * sigma
    else:
        error = pl = sigma = three_sigma = None
    return TrialRecord(frame_index=index, true_error=error, pl=pl,
                       three_sigma=three_sigma, sigma=sigma,
                       status=report.status, injected_outlier_ids=injected,
                       removed_ids=report.outlier_ids)


def resolve_worker_count(requested: int | None = None) -> int:
    """Worker count for campaign execution.

    An explicit request is honored as given; the default is the available
    parallelism.  The ``VIO_INTEGRITY_THREADS`` environment variable caps
    both.  Results never depend on this value.
    """
    if requested is not None and requested < 1:
        raise ConfigError(f"worker count must be >= 1, got {requested}")
    limit = requested if requested is not None else (os.cpu_count() or 1)
    env = os.environ.get("VIO_INTEGRITY_THREADS")
    if env is not None:
        try:
            cap = int(env)
        except ValueError as exc:
            raise ConfigError(f"VIO_INTEGRITY_THREADS must be an integer, got {env!r}") from exc
        if cap < 1:
            raise ConfigError(f"VIO_INTEGRITY_THREADS must be >= 1, got {cap}")
        limit = min(limit, cap)
    return limit


def run_monte_carlo(cfg: ScenarioConfig,
                    detection: DetectionConfig = DetectionConfig(),
                    solver: SolverConfig = SolverConfig(),
                    max_workers: int | None = None) -> list[TrialRecord]:
    """Monitor every synthesized frame of the scenario.

    Each frame's solver starts from the true pose shifted by the fixed
    ``INIT_PERTURBATION`` offset.  Frames the monitor refuses keep their
    status in the record with the numeric fields empty; the campaign never
    aborts on individual frames.
    """
    landmarks, poses = generate_scene(cfg)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_frames + 1)[1:]

    def one_trial(index: int) -> TrialRecord:
        truth = poses[index]
        frame, injected = synthesize_frame(truth, landmarks, cfg, seeds[index])
        start = retract(truth, INIT_PERTURBATION)
        report = monitor_frame(frame, landmarks, start, cfg.intr, detection, solver)
        return _record_from_report(index, report, truth, injected)

    workers = resolve_worker_count(max_workers)
    if workers == 1:
        return [one_trial(i) for i in range(cfg.n_frames)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one_trial, range(cfg.n_frames)))
