"""HTTP endpoints against direct calls into the core package."""

import math

import pytest
from fastapi.testclient import TestClient

from vio_integrity import __version__
from vio_integrity.geometry import identity_pose
from vio_integrity.harness import summarize, trial_rows
from vio_integrity.integrity import monitor_frame
from vio_integrity.metrics import ideal_bound, solve_tau
from vio_integrity.service import create_app
from vio_integrity.simulation import (ScenarioConfig, generate_scene,
                                      run_monte_carlo, synthesize_frame)


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


def observation_payload(obs):
    q = obs.covariance
    return {"landmark_id": obs.landmark_id,
            "measurement": [float(v) for v in obs.measurement],
            "covariance": [float(q[0, 0]), float(q[0, 1]), float(q[0, 2]),
                           float(q[1, 1]), float(q[1, 2]), float(q[2, 2])]}


def frame_payload(frame):
    return {"observations": [observation_payload(o)
                             for o in frame.observations]}


def test_health_reports_package_version(client):
    body = client.get("/health").json()
    assert body == {"status": "ok", "version": __version__}


def test_simulate_matches_direct_campaign(client):
    cfg = ScenarioConfig(seed=17, n_landmarks=12, n_frames=6,
                         outlier_rate=0.2)
    expected = run_monte_carlo(cfg, max_workers=1)

    resp = client.post("/simulate", json={
        "scenario": {"seed": 17, "n_landmarks": 12, "n_frames": 6,
                     "outlier_rate": 0.2}})
    assert resp.status_code == 200
    trials = resp.json()["trials"]
    assert len(trials) == len(expected)
    for got, rec in zip(trials, expected):
        assert got["frame_index"] == rec.frame_index
        assert got["status"] == rec.status.value
        assert got["injected_outlier_ids"] == list(rec.injected_outlier_ids)
        assert got["removed_ids"] == list(rec.removed_ids)
        # floats survive the JSON trip exactly
        assert tuple(got["true_error"]) == tuple(rec.true_error)
        assert tuple(got["pl"]) == tuple(rec.pl)
        assert tuple(got["three_sigma"]) == tuple(rec.three_sigma)
        assert tuple(got["sigma"]) == tuple(rec.sigma)


def test_simulate_worker_count_does_not_change_results(client):
    scenario = {"seed": 8, "n_landmarks": 10, "n_frames": 8,
                "outlier_rate": 0.1}
    serial = client.post("/simulate", json={"scenario": scenario,
                                            "workers": 1})
    threaded = client.post("/simulate", json={"scenario": scenario,
                                              "workers": 3})
    assert serial.json() == threaded.json()


def test_simulate_nulls_error_fields_on_unmonitored_frames(client):
    # seed 3 of this stressed scenario yields all three verdict kinds
    resp = client.post("/simulate", json={
        "scenario": {"seed": 3, "n_landmarks": 8, "n_frames": 12,
                     "outlier_rate": 0.45,
                     "outlier_magnitude": [40.0, 80.0]}})
    trials = resp.json()["trials"]
    statuses = {t["status"] for t in trials}
    assert "Unsafe" in statuses and "OutliersExcluded" in statuses
    for t in trials:
        monitored = t["status"] in ("Nominal", "OutliersExcluded")
        for field in ("true_error", "pl", "three_sigma", "sigma"):
            assert (t[field] is not None) == monitored


def test_monitor_matches_core_pipeline(client):
    cfg = ScenarioConfig(seed=41, n_landmarks=15, n_frames=4,
                         trajectory=((0.0, 0.0, 0.0), (0.4, -0.1, 0.8)),
                         outlier_rate=0.15)
    landmarks, poses = generate_scene(cfg)
    frames = [synthesize_frame(pose, landmarks, cfg, 100 + k)[0]
              for k, pose in enumerate(poses)]

    payload = {
        "landmarks": [{"landmark_id": i, "position": [float(v)
                                                      for v in lm.position]}
                      for i, lm in sorted(landmarks.items())],
        "frames": [frame_payload(f) for f in frames],
    }
    resp = client.post("/monitor", json=payload)
    assert resp.status_code == 200
    reports = resp.json()["reports"]
    assert len(reports) == len(frames)

    pose = identity_pose()
    for got, frame in zip(reports, frames):
        rep = monitor_frame(frame, landmarks, pose, cfg.intr)
        assert got["status"] == rep.status.value
        assert got["inlier_ids"] == list(rep.inlier_ids)
        assert got["outlier_ids"] == list(rep.outlier_ids)
        assert got["ipsor_rounds"] == rep.ipsor_rounds
        assert tuple(got["translation"]) == tuple(rep.pose.translation)
        assert got["weighted_rss"] == rep.weighted_rss
        assert got["test_statistic"] == rep.test_statistic
        assert len(got["axis_bounds"]) == len(rep.axis_bounds)
        for gb, b in zip(got["axis_bounds"], rep.axis_bounds):
            assert gb["axis"] == b.axis
            assert gb["pl"] == b.pl
            assert gb["eps_f"] == b.eps_f
            assert gb["eps_n"] == b.eps_n
            assert gb["worst_feature_id"] == b.worst_feature_id
        if rep.axis_bounds:
            pose = rep.pose
    # the walk above only means something if the estimate actually moved
    assert any(abs(v) > 0.05 for v in reports[-1]["translation"])


def test_monitor_unmonitorable_frame_reports_nulls(client):
    cfg = ScenarioConfig(seed=5, n_landmarks=8, n_frames=1)
    landmarks, poses = generate_scene(cfg)
    frame, _ = synthesize_frame(poses[0], landmarks, cfg, 7)
    starved = {"observations": [observation_payload(o)
                                for o in frame.observations[:2]]}

    resp = client.post("/monitor", json={
        "landmarks": [{"landmark_id": i,
                       "position": [float(v) for v in lm.position]}
                      for i, lm in sorted(landmarks.items())],
        "frames": [starved],
        "initial_translation": [0.25, 0.0, -0.5],
    })
    rep = resp.json()["reports"][0]
    assert rep["status"] == "Unmonitorable"
    assert rep["weighted_rss"] is None
    assert rep["test_statistic"] is None
    assert rep["axis_bounds"] == []
    # pose falls back to the supplied prior
    assert rep["translation"] == [0.25, 0.0, -0.5]
    assert "need" in rep["reason"]


def test_monitor_rejects_landmark_ids_missing_from_map(client):
    resp = client.post("/monitor", json={
        "landmarks": [{"landmark_id": 0, "position": [0.0, 0.0, 5.0]}],
        "frames": [{"observations": []},
                   {"observations": [
                       {"landmark_id": 9,
                        "measurement": [367.0, 252.0, 9.0],
                        "covariance": [1.0, 0.0, 0.0, 1.0, 0.0, 2.0]}]}],
    })
    assert resp.status_code == 422
    body = resp.json()
    assert body["category"] == "ConfigError"
    assert "frame 1" in body["detail"] and "[9]" in body["detail"]


def test_summarize_matches_direct_summary(client):
    cfg = ScenarioConfig(seed=29, n_landmarks=14, n_frames=20,
                         outlier_rate=0.1, sigma_levels=(1.0, 2.0))
    rows = trial_rows(run_monte_carlo(cfg, max_workers=1))
    expected = summarize(rows)

    resp = client.post("/summarize", json={
        "trials": [{"frame": r.frame_index, "axis": r.axis, "error": r.error,
                    "pl": r.pl, "three_sigma": r.three_sigma,
                    "sigma": r.sigma, "status": r.status} for r in rows]})
    assert resp.status_code == 200
    body = resp.json()
    assert body["tau"] == expected.tau
    assert len(body["rows"]) == len(expected.rows)
    for got, row in zip(body["rows"], expected.rows):
        assert (got["axis"], got["method"]) == (row.axis, row.method)
        assert got["bounding_rate"] == row.bounding_rate
        assert got["rbt"] == row.rbt
        assert got["n"] == row.n
    assert len(body["cdf"]) == len(expected.cdf)
    for got, row in zip(body["cdf"], expected.cdf):
        assert (got["method"], got["axis"]) == (row.method, row.axis)
        assert got["diff"] == row.diff
        assert got["cum_fraction"] == row.cum_fraction


def test_summarize_empty_sample_maps_to_422(client):
    resp = client.post("/summarize", json={"trials": []})
    assert resp.status_code == 422
    assert resp.json()["category"] == "EmptySampleSet"


def test_tau_endpoint_returns_solver_outputs(client):
    resp = client.post("/tau", json={})
    body = resp.json()
    assert body["p_d"] == 0.9973
    assert body["tau"] == solve_tau(0.9973)
    assert body["minimizer"] == ideal_bound(0.9973)

    custom = client.post("/tau", json={"p_d": 0.99}).json()
    assert custom["tau"] == solve_tau(0.99)
    assert custom["tau"] != body["tau"]


def test_malformed_request_uses_fastapi_validation_shape(client):
    # type/shape errors never reach the core, so no category field
    resp = client.post("/simulate", json={"scenario": {"seed": -1}})
    assert resp.status_code == 422
    body = resp.json()
    assert "category" not in body
    assert isinstance(body["detail"], list)


def test_core_config_errors_carry_category(client):
    resp = client.post("/simulate",
                       json={"scenario": {"seed": 1, "n_landmarks": 3}})
    assert resp.status_code == 422
    body = resp.json()
    assert body["category"] == "ConfigError"
    assert "n_landmarks" in body["detail"]


def test_summarize_tau_is_finite_and_large(client):
    # regression guard: the mixture weight is a count scale, not a fraction
    resp = client.post("/tau", json={"p_d": 0.9973}).json()
    assert math.isfinite(resp["tau"])
    assert resp["tau"] == pytest.approx(2881.921892579702, rel=1e-12)
    assert resp["minimizer"] == pytest.approx(2.9999769927034015, rel=1e-9)
