"""Scenario generation, frame synthesis, and the Monte Carlo driver."""

import numpy as np
import pytest
from numpy.random import SeedSequence

from vio_integrity.errors import ConfigError, InfeasibleScene
from vio_integrity.geometry import camera_points, project_stereo_many
from vio_integrity.integrity import FrameStatus
from vio_integrity.simulation import (DEFAULT_INTRINSICS, INIT_PERTURBATION,
                                      ScenarioConfig, generate_scene,
                                      resolve_worker_count, run_monte_carlo,
                                      synthesize_frame, trajectory_poses)


def frame_seeds(cfg):
    return SeedSequence(cfg.seed).spawn(cfg.n_frames + 1)[1:]


def records_equal(a, b):
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if (x.frame_index, x.status, x.injected_outlier_ids,
                x.removed_ids) != (y.frame_index, y.status,
                                   y.injected_outlier_ids, y.removed_ids):
            return False
        for field in ("true_error", "pl", "three_sigma", "sigma"):
            u, v = getattr(x, field), getattr(y, field)
            if (u is None) != (v is None):
                return False
            if u is not None and not np.array_equal(u, v):
                return False
    return True


def test_scenario_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(seed=-1)
    with pytest.raises(ConfigError):
        ScenarioConfig(seed=0, n_landmarks=5)
    with pytest.raises(ConfigError):
        ScenarioConfig(seed=0, depth_range=(5.0, 2.0))
    with pytest.raises(ConfigError):
        ScenarioConfig(seed=0, outlier_rate=1.0)
    with pytest.raises(ConfigError):
        ScenarioConfig(seed=0, outlier_magnitude=(50.0, 40.0))
    with pytest.raises(ConfigError):
        ScenarioConfig(seed=0, sigma_levels=())
    with pytest.raises(ConfigError):
        ScenarioConfig(seed=0, pixel_sigma_base=0.0)
    with pytest.raises(ConfigError):
        ScenarioConfig(seed=0, n_frames=0)


def test_generate_scene_is_deterministic():
    cfg = ScenarioConfig(seed=12, n_landmarks=20, n_frames=3)
    first_lms, first_poses = generate_scene(cfg)
    second_lms, second_poses = generate_scene(cfg)
    assert sorted(first_lms) == sorted(second_lms)
    for i in first_lms:
        assert np.array_equal(first_lms[i].position, second_lms[i].position)
    for p, q in zip(first_poses, second_poses):
        assert np.array_equal(p.translation, q.translation)


def test_generate_scene_respects_visibility_from_all_poses():
    cfg = ScenarioConfig(seed=13, n_landmarks=25, n_frames=4,
                         depth_range=(2.0, 10.0),
                         trajectory=((0.0, 0.0, 0.0), (0.5, 0.2, 1.0)))
    landmarks, poses = generate_scene(cfg)
    assert len(landmarks) == 25
    positions = np.array([landmarks[i].position for i in sorted(landmarks)])
    for pose in poses:
        pts = camera_points(pose, positions)
        assert np.all(pts[:, 2] > cfg.depth_range[0] - 1e-9)
        assert np.all(pts[:, 2] < cfg.depth_range[1] + 1e-9)
        uvd = project_stereo_many(pts, cfg.intr)
        assert np.all(uvd[:, 0] >= 0) and np.all(uvd[:, 0] <= 2 * cfg.intr.cu)
        assert np.all(uvd[:, 1] >= 0) and np.all(uvd[:, 1] <= 2 * cfg.intr.cv)


def test_generate_scene_gives_up_on_impossible_geometry():
    # moving 8 m forward pushes every shallow landmark behind the camera
    cfg = ScenarioConfig(seed=14, n_landmarks=10, n_frames=2,
                         depth_range=(2.0, 2.5),
                         trajectory=((0.0, 0.0, 0.0), (0.0, 0.0, 8.0)))
    with pytest.raises(InfeasibleScene):
        generate_scene(cfg)


def test_trajectory_poses_static_and_waypoints():
    static = ScenarioConfig(seed=0, n_frames=4)
    for pose in trajectory_poses(static):
        assert np.array_equal(pose.translation, np.zeros(3))
        assert np.array_equal(pose.rotation, np.eye(3))

    moving = ScenarioConfig(seed=0, n_frames=3,
                            trajectory=((0.0, 0.0, 0.0), (2.0, 0.0, 4.0)))
    poses = trajectory_poses(moving)
    assert np.allclose(poses[0].translation, [0.0, 0.0, 0.0])
    assert np.allclose(poses[1].translation, [1.0, 0.0, 2.0])
    assert np.allclose(poses[2].translation, [2.0, 0.0, 4.0])


def test_synthesize_frame_is_deterministic_per_seed():
    cfg = ScenarioConfig(seed=15, n_landmarks=15, n_frames=2,
                         outlier_rate=0.2)
    landmarks, poses = generate_scene(cfg)
    seeds = frame_seeds(cfg)
    frame_a, injected_a = synthesize_frame(poses[0], landmarks, cfg, seeds[0])
    frame_b, injected_b = synthesize_frame(poses[0], landmarks, cfg, seeds[0])
    assert injected_a == injected_b
    for x, y in zip(frame_a.observations, frame_b.observations):
        assert x.landmark_id == y.landmark_id
        assert np.array_equal(x.measurement, y.measurement)
    frame_c, _ = synthesize_frame(poses[1], landmarks, cfg, seeds[1])
    assert not np.array_equal(frame_a.observations[0].measurement,
                              frame_c.observations[0].measurement)


def test_synthesize_frame_covariance_structure_and_order():
    cfg = ScenarioConfig(seed=16, n_landmarks=12, n_frames=1,
                         sigma_levels=(1.0, 2.0))
    landmarks, poses = generate_scene(cfg)
    frame, _ = synthesize_frame(poses[0], landmarks, cfg, frame_seeds(cfg)[0])
    assert [obs.landmark_id for obs in frame.observations] == sorted(landmarks)
    for obs in frame.observations:
        q = obs.covariance
        sigma_sq = q[0, 0]
        assert sigma_sq in (1.0, 4.0)
        assert np.array_equal(q, sigma_sq * np.diag([1.0, 1.0, 2.0]))


def test_injection_counts_follow_the_configured_rate():
    cfg = ScenarioConfig(seed=17, n_landmarks=30, n_frames=200,
                         outlier_rate=0.1)
    landmarks, poses = generate_scene(cfg)
    total = 0
    for pose, seed in zip(poses, frame_seeds(cfg)):
        _, injected = synthesize_frame(pose, landmarks, cfg, seed)
        total += len(injected)
    # Binomial(6000, 0.1): sd ~ 23, so a 100-count window is ~4.3 sigma
    assert abs(total - 600) < 100


def test_pixel_noise_has_the_configured_scale():
    cfg = ScenarioConfig(seed=18, n_landmarks=30, n_frames=500)
    landmarks, poses = generate_scene(cfg)
    positions = np.array([landmarks[i].position for i in sorted(landmarks)])
    uv_residuals = []
    d_residuals = []
    for pose, seed in zip(poses, frame_seeds(cfg)):
        frame, _ = synthesize_frame(pose, landmarks, cfg, seed)
        clean = project_stereo_many(camera_points(pose, positions), cfg.intr)
        meas = np.array([obs.measurement for obs in frame.observations])
        uv_residuals.append((meas - clean)[:, :2].ravel())
        d_residuals.append((meas - clean)[:, 2])
    uv_std = np.std(np.concatenate(uv_residuals))
    d_std = np.std(np.concatenate(d_residuals))
    assert abs(uv_std - 1.0) < 0.02
    assert abs(d_std - np.sqrt(2.0)) < 0.02 * np.sqrt(2.0)


def test_run_monte_carlo_is_worker_invariant():
    cfg = ScenarioConfig(seed=19, n_landmarks=15, n_frames=12,
                         outlier_rate=0.1)
    sequential = run_monte_carlo(cfg, max_workers=1)
    threaded = run_monte_carlo(cfg, max_workers=3)
    assert records_equal(sequential, threaded)
    assert [r.frame_index for r in sequential] == list(range(12))


def test_run_monte_carlo_monitored_records_are_complete():
    cfg = ScenarioConfig(seed=20, n_landmarks=20, n_frames=10,
                         outlier_rate=0.1)
    records = run_monte_carlo(cfg, max_workers=1)
    for record in records:
        assert record.status in (FrameStatus.NOMINAL,
                                 FrameStatus.OUTLIERS_EXCLUDED)
        assert record.monitored
        for field in ("true_error", "pl", "three_sigma", "sigma"):
            value = getattr(record, field)
            assert value.shape == (3,)
            assert np.all(np.isfinite(value)) and np.all(value >= 0.0)
        assert np.allclose(record.three_sigma, 3.0 * record.sigma)


def test_bounds_scale_with_the_noise_level():
    base = ScenarioConfig(seed=21, n_landmarks=20, n_frames=25)
    doubled = ScenarioConfig(seed=21, n_landmarks=20, n_frames=25,
                             pixel_sigma_base=2.0)
    sigma_base = np.mean([r.sigma for r in run_monte_carlo(base)], axis=0)
    sigma_doubled = np.mean([r.sigma for r in run_monte_carlo(doubled)],
                            axis=0)
    ratio = sigma_doubled / sigma_base
    assert np.all(np.abs(ratio - 2.0) < 0.2)


def test_init_perturbation_magnitudes():
    assert np.linalg.norm(INIT_PERTURBATION[:3]) == pytest.approx(0.05)
    assert np.linalg.norm(INIT_PERTURBATION[3:]) == pytest.approx(0.02)


def test_resolve_worker_count(monkeypatch):
    monkeypatch.delenv("VIO_INTEGRITY_THREADS", raising=False)
    assert resolve_worker_count(4) == 4
    assert resolve_worker_count() >= 1
    monkeypatch.setenv("VIO_INTEGRITY_THREADS", "2")
    assert resolve_worker_count() <= 2
    assert resolve_worker_count(8) == 2
    monkeypatch.setenv("VIO_INTEGRITY_THREADS", "zero")
    with pytest.raises(ConfigError):
        resolve_worker_count()
    monkeypatch.setenv("VIO_INTEGRITY_THREADS", "0")
    with pytest.raises(ConfigError):
        resolve_worker_count()


def test_default_intrinsics_are_plausible_stereo_values():
    assert DEFAULT_INTRINSICS.fu == DEFAULT_INTRINSICS.fv == 435.2
    assert DEFAULT_INTRINSICS.baseline == pytest.approx(0.11)
