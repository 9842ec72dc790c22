"""Linear system assembly, WLS step, and the robust pose solver."""

import numpy as np
import pytest

from _oracles import wls_by_qr
from vio_integrity.errors import (DegenerateGeometry, DepthNonPositive,
                                  NotPositiveDefinite)
from vio_integrity.estimation import (Frame, Observation, SolverConfig,
                                      linear_residual, linearize, solve_pose,
                                      wls_solve)
from vio_integrity.geometry import (Landmark, Pose, StereoIntrinsics,
                                    camera_points, identity_pose,
                                    project_stereo_many, retract,
                                    rotation_exp)

INTR = StereoIntrinsics(fu=435.2, fv=435.2, cu=367.4, cv=252.2, baseline=0.11)


def make_scene(rng, n=12, depth=(3.0, 12.0)):
    """Landmarks in front of the identity pose, spread across the image."""
    z = rng.uniform(*depth, size=n)
    u = rng.uniform(0.15, 0.85, size=n) * 2.0 * INTR.cu
    v = rng.uniform(0.15, 0.85, size=n) * 2.0 * INTR.cv
    x = (u - INTR.cu) * z / INTR.fu
    y = (v - INTR.cv) * z / INTR.fv
    positions = np.column_stack([x, y, z])
    return {i: Landmark(i, positions[i]) for i in range(n)}


def make_frame(landmarks, pose, rng, sigma=0.0, corrupt=()):
    ids = sorted(landmarks)
    positions = np.array([landmarks[i].position for i in ids])
    clean = project_stereo_many(camera_points(pose, positions), INTR)
    cov = sigma_cov(max(sigma, 1.0))
    observations = []
    for k, i in enumerate(ids):
        meas = clean[k].copy()
        if sigma > 0.0:
            meas += rng.standard_normal(3) * sigma * np.array([1.0, 1.0, np.sqrt(2.0)])
        if i in corrupt:
            meas += np.array([60.0, -45.0, 0.0])
        observations.append(Observation(i, meas, cov))
    return Frame(tuple(observations))


def sigma_cov(sigma):
    return sigma ** 2 * np.diag([1.0, 1.0, 2.0])


def test_linearize_shapes_and_block_structure():
    rng = np.random.default_rng(20)
    landmarks = make_scene(rng, n=7)
    frame = make_frame(landmarks, identity_pose(), rng, sigma=1.0)
    system = linearize(frame, landmarks, identity_pose(), INTR)
    assert system.jacobian.shape == (21, 6)
    assert system.information.shape == (21, 21)
    assert system.innovation.shape == (21,)
    assert system.info_blocks.shape == (7, 3, 3)
    assert system.landmark_ids == tuple(range(7))
    assert system.n_features == 7
    # the big information matrix is exactly the blocks on the diagonal
    for k in range(7):
        s = slice(3 * k, 3 * k + 3)
        assert np.array_equal(system.information[s, s], system.info_blocks[k])
    off = system.information.copy()
    for k in range(7):
        s = slice(3 * k, 3 * k + 3)
        off[s, s] = 0.0
    assert np.all(off == 0.0)


def test_linearize_innovation_is_measured_minus_predicted():
    rng = np.random.default_rng(21)
    landmarks = make_scene(rng, n=5)
    truth = identity_pose()
    frame = make_frame(landmarks, truth, rng, sigma=0.0)
    moved = retract(truth, np.array([0.02, -0.01, 0.03, 0.004, -0.002, 0.001]))
    system = linearize(frame, landmarks, moved, INTR)
    positions = np.array([landmarks[i].position for i in sorted(landmarks)])
    predicted = project_stereo_many(camera_points(moved, positions), INTR)
    measured = np.array([obs.measurement for obs in frame.observations])
    assert np.allclose(system.innovation, (measured - predicted).ravel(),
                       atol=1e-12)


def test_linearize_reports_offending_landmark_id():
    landmarks = {0: Landmark(0, np.array([0.0, 0.0, 5.0])),
                 1: Landmark(1, np.array([0.0, 0.0, -4.0]))}
    obs = [Observation(0, np.array([INTR.cu, INTR.cv, 10.0]), sigma_cov(1.0)),
           Observation(1, np.array([INTR.cu, INTR.cv, 10.0]), sigma_cov(1.0))]
    with pytest.raises(DepthNonPositive) as info:
        linearize(Frame(tuple(obs)), landmarks, identity_pose(), INTR)
    assert info.value.landmark_id == 1


def test_wls_matches_qr_reference():
    rng = np.random.default_rng(22)
    for _ in range(20):
        landmarks = make_scene(rng, n=9)
        frame = make_frame(landmarks, identity_pose(), rng, sigma=1.5)
        start = retract(identity_pose(),
                        np.array([0.05, -0.02, 0.04, 0.01, -0.02, 0.015]))
        system = linearize(frame, landmarks, start, INTR)
        dx = wls_solve(system)
        ref = wls_by_qr(system.jacobian, system.information, system.innovation)
        assert np.max(np.abs(dx - ref)) < 1e-8
        # the normal equations are stationary at the estimate
        grad = system.jacobian.T @ system.information @ linear_residual(system, dx)
        assert np.max(np.abs(grad)) < 1e-7


def test_wls_rejects_degenerate_geometry():
    # all landmarks on one ray: translation along it is unobservable
    landmarks = {i: Landmark(i, np.array([0.1, 0.05, 2.0 + 3.0 * i]))
                 for i in range(5)}
    positions = np.array([landmarks[i].position for i in range(5)])
    clean = project_stereo_many(positions, INTR)
    frame = Frame(tuple(Observation(i, clean[i], sigma_cov(1.0))
                        for i in range(5)))
    system = linearize(frame, landmarks, identity_pose(), INTR)
    with pytest.raises(DegenerateGeometry):
        wls_solve(system)


def test_observation_rejects_bad_covariance():
    with pytest.raises(ValueError):
        Observation(0, np.zeros(3), np.diag([1.0, 1.0, np.inf]))
    with pytest.raises(ValueError):
        Observation(0, np.zeros(3), np.array([[1.0, 0.5, 0.0],
                                              [0.0, 1.0, 0.0],
                                              [0.0, 0.0, 1.0]]))
    with pytest.raises(NotPositiveDefinite):
        lm = {0: Landmark(0, np.array([0.0, 0.0, 5.0])),
              1: Landmark(1, np.array([1.0, 0.5, 6.0])),
              2: Landmark(2, np.array([-1.0, -0.5, 7.0]))}
        obs = []
        positions = np.array([lm[i].position for i in range(3)])
        clean = project_stereo_many(positions, INTR)
        for i in range(3):
            cov = np.diag([1.0, 1.0, -2.0]) if i == 2 else sigma_cov(1.0)
            obs.append(Observation(i, clean[i], cov))
        linearize(Frame(tuple(obs)), lm, identity_pose(), INTR)


def test_frame_rejects_duplicate_ids():
    obs = Observation(4, np.zeros(3), sigma_cov(1.0))
    with pytest.raises(ValueError):
        Frame((obs, obs))


def test_noiseless_solve_recovers_exact_pose():
    rng = np.random.default_rng(23)
    truth = Pose(np.array([0.3, -0.1, 0.2]),
                 rotation_exp(np.array([0.05, -0.03, 0.08])))
    landmarks = make_scene(rng, n=10)
    # re-center the scene so the landmarks sit in front of the true pose
    landmarks = {i: Landmark(i, lm.position @ truth.rotation + truth.translation)
                 for i, lm in landmarks.items()}
    frame = make_frame(landmarks, truth, rng, sigma=0.0)
    start = retract(truth, np.array([0.08, -0.05, 0.06, 0.02, 0.015, -0.01]))
    result = solve_pose(frame, landmarks, start, INTR)
    assert result.converged
    assert np.max(np.abs(result.pose.translation - truth.translation)) < 1e-9
    assert np.max(np.abs(result.pose.rotation - truth.rotation)) < 1e-9
    assert result.objective < 1e-12


def test_noisy_solve_lands_within_statistical_error():
    rng = np.random.default_rng(24)
    landmarks = make_scene(rng, n=40)
    truth = identity_pose()
    frame = make_frame(landmarks, truth, rng, sigma=1.0)
    start = retract(truth, np.full(6, 0.02))
    result = solve_pose(frame, landmarks, start, INTR)
    assert result.converged
    # rough 5-sigma sanity bound on the translation error at N=40
    assert np.linalg.norm(result.pose.translation) < 0.15


def test_huber_caps_the_influence_of_a_gross_outlier():
    rng = np.random.default_rng(25)
    landmarks = make_scene(rng, n=20)
    truth = identity_pose()
    start = retract(truth, np.full(6, 0.01))

    clean = make_frame(landmarks, truth, rng, sigma=0.5)
    spiked = make_frame(landmarks, truth, rng, sigma=0.5, corrupt={3})
    err_clean = np.linalg.norm(
        solve_pose(clean, landmarks, start, INTR).pose.translation)
    err_spiked = np.linalg.norm(
        solve_pose(spiked, landmarks, start, INTR).pose.translation)
    # a 75 px outlier at full quadratic weight would shift the pose by
    # centimeters; the robust solve stays within a few millimeters
    assert err_spiked < 6e-3
    assert err_spiked < 12 * max(err_clean, 1e-4)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(huber_delta=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iterations=0)
    with pytest.raises(ValueError):
        SolverConfig(convergence_tol=-1.0)


def test_missing_landmark_raises_key_error():
    rng = np.random.default_rng(26)
    landmarks = make_scene(rng, n=4)
    frame = make_frame(landmarks, identity_pose(), rng, sigma=1.0)
    del landmarks[2]
    with pytest.raises(KeyError):
        linearize(frame, landmarks, identity_pose(), INTR)
