"""Command line front end.

Every subcommand is a thin client of the HTTP service: requests go to an
in-process application by default, or to a running server when --server
is given.  File parsing and CSV writing happen on the client side; all
numerics run behind the API, so results are identical either way.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Any

import httpx

from . import __version__
from .errors import VioIntegrityError
from .estimation import SolverConfig
from .geometry import StereoIntrinsics
from .harness import (FrameLogRecord, ReportRow, SummaryRow, load_scenario,
                      read_frames, read_map, read_trials, write_cdf,
                      write_reports, write_summary, write_trials)
from .harness.summary import CdfRow
from .integrity import DetectionConfig
from .simulation import DEFAULT_INTRINSICS, ScenarioConfig


class CliError(Exception):
    """Anything that should end the run with a one-line stderr message."""


def _describe_failure(status_code: int, body: Any) -> str:
    if isinstance(body, dict) and "category" in body:
        return f"{body['category']}: {body['detail']}"
    if isinstance(body, dict) and isinstance(body.get("detail"), list):
        first = body["detail"][0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        return f"invalid request: {where}: {first.get('msg', '')}"
    return f"service error (HTTP {status_code}): {body}"


class ServiceClient:
    """POSTs to either an in-process app or a remote server."""

    def __init__(self, server: str | None = None):
        if server is None:
            import warnings
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import create_app
            self._client = TestClient(create_app())
        else:
            self._client = httpx.Client(base_url=server, timeout=600.0)

    def post(self, path: str, payload: dict) -> Any:
        try:
            response = self._client.post(path, json=payload)
        except httpx.TransportError as exc:
            raise CliError(f"could not reach service: {exc}") from exc
        if response.status_code != 200:
            try:
                body = response.json()
            except ValueError:
                body = response.text
            raise CliError(_describe_failure(response.status_code, body))
        return response.json()


def _intr_payload(intr: StereoIntrinsics) -> dict:
    return {"fu": intr.fu, "fv": intr.fv, "cu": intr.cu, "cv": intr.cv,
            "baseline": intr.baseline}


def _detection_payload(cfg: DetectionConfig) -> dict:
    return {"p_fa": cfg.p_fa, "k_sigma": cfg.k_sigma,
            "min_inlier_count": cfg.min_inlier_count,
            "max_ipsor_rounds": cfg.max_ipsor_rounds}


def _solver_payload(cfg: SolverConfig) -> dict:
    return {"huber_delta": cfg.huber_delta,
            "max_iterations": cfg.max_iterations,
            "convergence_tol": cfg.convergence_tol, "z_min": cfg.z_min}


def _scenario_payload(cfg: ScenarioConfig) -> dict:
    trajectory = (cfg.trajectory if isinstance(cfg.trajectory, str)
                  else [list(w) for w in cfg.trajectory])
    return {"seed": cfg.seed, "n_landmarks": cfg.n_landmarks,
            "depth_range": list(cfg.depth_range), "n_frames": cfg.n_frames,
            "trajectory": trajectory,
            "pixel_sigma_base": cfg.pixel_sigma_base,
            "sigma_levels": list(cfg.sigma_levels),
            "outlier_rate": cfg.outlier_rate,
            "outlier_magnitude": list(cfg.outlier_magnitude),
            "intr": _intr_payload(cfg.intr)}


def _cmd_simulate(args: argparse.Namespace) -> None:
    parsed = load_scenario(args.config, seed=args.seed)
    if parsed.scenario is None:
        raise CliError(
            "scenario needs a seed; set one in the config or pass --seed")
    payload = {"scenario": _scenario_payload(parsed.scenario),
               "detection": _detection_payload(parsed.detection),
               "solver": _solver_payload(parsed.solver),
               "workers": args.workers}
    data = ServiceClient(args.server).post("/simulate", payload)
    rows = []
    for trial in data["trials"]:
        if trial["true_error"] is None:
            continue
        for k, axis in enumerate("xyz"):
            rows.append(FrameLogRecord(
                frame_index=trial["frame_index"], axis=axis,
                error=trial["true_error"][k], pl=trial["pl"][k],
                three_sigma=trial["three_sigma"][k],
                sigma=trial["sigma"][k], status=trial["status"]))
    write_trials(rows, args.out)
    skipped = sum(1 for t in data["trials"] if t["true_error"] is None)
    print(f"wrote {len(rows)} rows for {len(data['trials']) - skipped} "
          f"monitored frames to {args.out}"
          + (f" ({skipped} unmonitored)" if skipped else ""))


def _cmd_monitor(args: argparse.Namespace) -> None:
    parsed = load_scenario(args.config) if args.config else None
    intr = parsed.intr if parsed else DEFAULT_INTRINSICS
    detection = parsed.detection if parsed else DetectionConfig()
    solver = parsed.solver if parsed else SolverConfig()
    start = (list(parsed.initial_translation) if parsed
             else [0.0, 0.0, 0.0])

    landmarks = read_map(args.map)
    frames = read_frames(args.frames)
    order = sorted(frames)
    payload = {
        "landmarks": [{"landmark_id": lid, "position": list(lm.position)}
                      for lid, lm in sorted(landmarks.items())],
        "frames": [{"observations": [
            {"landmark_id": obs.landmark_id,
             "measurement": list(obs.measurement),
             "covariance": [obs.covariance[0, 0], obs.covariance[0, 1],
                            obs.covariance[0, 2], obs.covariance[1, 1],
                            obs.covariance[1, 2], obs.covariance[2, 2]]}
            for obs in frames[index].observations]} for index in order],
        "intr": _intr_payload(intr),
        "initial_translation": start,
        "detection": _detection_payload(detection),
        "solver": _solver_payload(solver)}
    data = ServiceClient(args.server).post("/monitor", payload)

    def num(value: float | None) -> float:
        return math.nan if value is None else value

    rows = [ReportRow(frame_index=order[rep["frame_index"]],
                      status=rep["status"],
                      weighted_rss=num(rep["weighted_rss"]),
                      threshold=num(rep["threshold"]),
                      pl=tuple(b["pl"] for b in rep["axis_bounds"]) or None,
                      sigma=(tuple(b["sigma"] for b in rep["axis_bounds"])
                             or None),
                      removed_ids=tuple(rep["outlier_ids"]),
                      reason=rep["reason"])
            for rep in data["reports"]]
    write_reports(rows, args.out)
    flagged = sum(1 for r in rows if r.removed_ids)
    print(f"monitored {len(rows)} frames, {flagged} with exclusions; "
          f"wrote {args.out}")


def _cmd_summarize(args: argparse.Namespace) -> None:
    records = read_trials(args.trials)
    payload = {"trials": [{"frame": r.frame_index, "axis": r.axis,
                           "error": r.error, "pl": r.pl,
                           "three_sigma": r.three_sigma, "sigma": r.sigma,
                           "status": r.status} for r in records],
               "p_d": args.pd}
    data = ServiceClient(args.server).post("/summarize", payload)
    out = Path(args.out)
    cdf_out = (Path(args.cdf_out) if args.cdf_out
               else out.with_name(out.stem + "_cdf" + out.suffix))
    write_summary([SummaryRow(**row) for row in data["rows"]], out)
    write_cdf([CdfRow(**row) for row in data["cdf"]], cdf_out)
    for row in data["rows"]:
        print(f"{row['axis']} {row['method']:>11}: "
              f"bounding_rate={row['bounding_rate']:.4f} "
              f"rbt={row['rbt']:.4f} (n={row['n']})")
    print(f"wrote {out} and {cdf_out}")


def _cmd_tau(args: argparse.Namespace) -> None:
    data = ServiceClient(args.server).post("/tau", {"p_d": args.pd})
    print(f"tau({data['p_d']!r}) = {data['tau']!r} "
          f"(ideal bound {data['minimizer']!r})")


def _cmd_serve(args: argparse.Namespace) -> None:
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(), host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vio-integrity",
        description="Stereo VIO integrity monitoring: simulation, "
                    "per-frame monitoring, and bound scoring.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate",
                         help="run a Monte Carlo campaign, write trials CSV")
    sim.add_argument("--config", required=True, help="scenario config file")
    sim.add_argument("--out", required=True, help="trials CSV to write")
    sim.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    sim.add_argument("--workers", type=int, default=None,
                     help="worker threads (default: auto)")

    mon = sub.add_parser("monitor",
                         help="monitor recorded frames against a map")
    mon.add_argument("--frames", required=True, help="frames CSV")
    mon.add_argument("--map", required=True, help="landmark map CSV")
    mon.add_argument("--config", default=None,
                     help="optional config for intrinsics/thresholds")
    mon.add_argument("--out", required=True, help="reports CSV to write")

    summ = sub.add_parser("summarize",
                          help="score bounding methods over a trials CSV")
    summ.add_argument("--trials", required=True, help="trials CSV to read")
    summ.add_argument("--out", required=True, help="summary CSV to write")
    summ.add_argument("--cdf-out", default=None,
                      help="CDF CSV (default: <out>_cdf.csv)")
    summ.add_argument("--pd", type=float, default=0.9973,
                      help="target detection probability (default 0.9973)")

    tau = sub.add_parser("tau", help="print the bound-miss penalty for p_d")
    tau.add_argument("--pd", type=float, default=0.9973)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)

    for command in (sim, mon, summ, tau):
        command.add_argument("--server", default=None,
                             help="base URL of a running service "
                                  "(default: in-process)")

    sim.set_defaults(func=_cmd_simulate)
    mon.set_defaults(func=_cmd_monitor)
    summ.set_defaults(func=_cmd_summarize)
    tau.set_defaults(func=_cmd_tau)
    serve.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CliError, VioIntegrityError, OSError) as exc:
        if isinstance(exc, CliError):
            message = str(exc)
        else:
            message = f"{type(exc).__name__}: {exc}"
        print(message, file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
