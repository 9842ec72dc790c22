"""Flat key=value scenario files.

One ``key = value`` pair per line; blank lines and ``#`` comments are
skipped; unknown or duplicate keys fail fast.  Pair and list values are
comma-separated numbers; trajectory waypoints are semicolon-separated
``x,y,z`` triples.  All keys are optional except that ``simulate`` needs a
seed from the file or the command line; files used only for monitoring
external logs can omit it.

Recognized keys:
  seed, n_landmarks, n_frames, depth_range, trajectory, pixel_sigma_base,
  sigma_levels, outlier_rate, outlier_magnitude,
  intr_fu, intr_fv, intr_cu, intr_cv, intr_baseline,
  p_fa, k_sigma, min_inlier_count, max_ipsor_rounds,
  huber_delta, max_iterations, convergence_tol, z_min,
  init_tx, init_ty, init_tz
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, VioIntegrityError
from ..estimation import SolverConfig
from ..geometry import StereoIntrinsics
from ..integrity import DetectionConfig
from ..simulation import DEFAULT_INTRINSICS, ScenarioConfig

_SCENARIO_KEYS = {"seed", "n_landmarks", "n_frames", "depth_range",
                  "trajectory", "pixel_sigma_base", "sigma_levels",
                  "outlier_rate", "outlier_magnitude"}
_INTR_KEYS = {"intr_fu", "intr_fv", "intr_cu", "intr_cv", "intr_baseline"}
_DETECTION_KEYS = {"p_fa", "k_sigma", "min_inlier_count", "max_ipsor_rounds"}
_SOLVER_KEYS = {"huber_delta", "max_iterations", "convergence_tol", "z_min"}
_INIT_KEYS = {"init_tx", "init_ty", "init_tz"}
_ALL_KEYS = (_SCENARIO_KEYS | _INTR_KEYS | _DETECTION_KEYS | _SOLVER_KEYS
             | _INIT_KEYS)


@dataclass(frozen=True)
class ParsedConfig:
    """Everything a scenario file can specify.

    ``scenario`` is ``None`` when the file carries no seed and none was
    supplied, which is fine for monitoring but rejected by ``simulate``.
    """

    scenario: ScenarioConfig | None
    detection: DetectionConfig
    solver: SolverConfig
    intr: StereoIntrinsics
    initial_translation: np.ndarray


def _pairs(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def _number(values: dict[str, str], key: str, kind, default):
    if key not in values:
        return default
    try:
        return kind(values[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: {exc}") from exc


def _float_list(values: dict[str, str], key: str,
                default: tuple[float, ...]) -> tuple[float, ...]:
    if key not in values:
        return default
    try:
        return tuple(float(p) for p in values[key].split(","))
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: {exc}") from exc


def _pair(values: dict[str, str], key: str,
          default: tuple[float, float]) -> tuple[float, float]:
    items = _float_list(values, key, default)
    if len(items) != 2:
        raise ConfigError(f"key {key!r}: expected two comma-separated numbers")
    return (items[0], items[1])


def _trajectory(values: dict[str, str]):
    raw = values.get("trajectory", "static")
    if raw == "static":
        return "static"
    try:
        waypoints = tuple(tuple(float(c) for c in part.split(","))
                          for part in raw.split(";") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"key 'trajectory': {exc}") from exc
    return waypoints


def parse_scenario(text: str, seed: int | None = None) -> ParsedConfig:
    """Parse config text; ``seed`` overrides any seed in the file."""
    values = _pairs(text)
    intr = StereoIntrinsics(
        fu=_number(values, "intr_fu", float, DEFAULT_INTRINSICS.fu),
        fv=_number(values, "intr_fv", float, DEFAULT_INTRINSICS.fv),
        cu=_number(values, "intr_cu", float, DEFAULT_INTRINSICS.cu),
        cv=_number(values, "intr_cv", float, DEFAULT_INTRINSICS.cv),
        baseline=_number(values, "intr_baseline", float,
                         DEFAULT_INTRINSICS.baseline))
    try:
        detection = DetectionConfig(
            p_fa=_number(values, "p_fa", float, 0.05),
            k_sigma=_number(values, "k_sigma", float, 3.0),
            min_inlier_count=_number(values, "min_inlier_count", int, None),
            max_ipsor_rounds=_number(values, "max_ipsor_rounds", int, 10))
        defaults = SolverConfig()
        solver = SolverConfig(
            huber_delta=_number(values, "huber_delta", float, defaults.huber_delta),
            max_iterations=_number(values, "max_iterations", int,
                                   defaults.max_iterations),
            convergence_tol=_number(values, "convergence_tol", float,
                                    defaults.convergence_tol),
            z_min=_number(values, "z_min", float, defaults.z_min))
    except (VioIntegrityError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    initial = np.array([_number(values, "init_tx", float, 0.0),
                        _number(values, "init_ty", float, 0.0),
                        _number(values, "init_tz", float, 0.0)])
    resolved_seed = seed if seed is not None else _number(values, "seed", int, None)
    scenario = None
    if resolved_seed is not None:
        scenario = ScenarioConfig(
            seed=resolved_seed,
            n_landmarks=_number(values, "n_landmarks", int, 50),
            depth_range=_pair(values, "depth_range", (2.0, 20.0)),
            n_frames=_number(values, "n_frames", int, 100),
            trajectory=_trajectory(values),
            pixel_sigma_base=_number(values, "pixel_sigma_base", float, 1.0),
            sigma_levels=_float_list(values, "sigma_levels", (1.0,)),
            outlier_rate=_number(values, "outlier_rate", float, 0.0),
            outlier_magnitude=_pair(values, "outlier_magnitude", (30.0, 100.0)),
            intr=intr)
    return ParsedConfig(scenario=scenario, detection=detection, solver=solver,
                        intr=intr, initial_translation=initial)


def load_scenario(path: str | Path, seed: int | None = None) -> ParsedConfig:
    return parse_scenario(Path(path).read_text(encoding="utf-8"), seed=seed)
