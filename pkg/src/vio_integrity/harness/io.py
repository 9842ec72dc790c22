"""CSV interchange for trials, maps, frame logs, reports, and summaries.

All files are UTF-8 with LF line endings and a fixed header; floats are
written in Python's shortest round-trip form so a write/read cycle is
lossless at full double precision.  Cells never contain commas, so rows
are plain comma joins.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

if TYPE_CHECKING:
    from .summary import CdfRow, SummaryRow

from ..errors import FormatError
from ..estimation import Frame, Observation
from ..geometry import Landmark
from ..integrity import FrameStatus, IntegrityReport
from ..simulation import TrialRecord

TRIALS_HEADER = "frame,axis,error,pl,three_sigma,sigma,status"
MAP_HEADER = "landmark_id,px,py,pz"
FRAMES_HEADER = "frame,landmark_id,u,v,d,q11,q12,q13,q22,q23,q33"
SUMMARY_HEADER = "axis,method,bounding_rate,rbt,n"
CDF_HEADER = "method,axis,diff,cum_fraction"
REPORTS_HEADER = ("frame,status,weighted_rss,threshold,pl_x,pl_y,pl_z,"
                  "sigma_x,sigma_y,sigma_z,removed_ids,reason")

_AXES = ("x", "y", "z")
_STATUS_VALUES = frozenset(s.value for s in FrameStatus)


@dataclass(frozen=True)
class FrameLogRecord:
    """One frame-axis comparison row, the unit of the trials format."""

    frame_index: int
    axis: str
    error: float
    pl: float
    three_sigma: float
    sigma: float
    status: str

    def __post_init__(self) -> None:
        if self.axis not in _AXES:
            raise ValueError(f"axis must be one of {_AXES}, got {self.axis!r}")
        numbers = (self.error, self.pl, self.three_sigma, self.sigma)
        if not all(np.isfinite(x) for x in numbers):
            raise ValueError(f"non-finite numeric field in row {self!r}")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.status not in _STATUS_VALUES:
            raise ValueError(f"unknown status {self.status!r}")


def trial_rows(records: Iterable[TrialRecord]) -> list[FrameLogRecord]:
    """Flatten campaign records to frame-axis rows.

    Frames without bounds (Unsafe or Unmonitorable) produce no rows; the
    trials format only carries finite comparisons.
    """
    rows: list[FrameLogRecord] = []
    for record in records:
        if not record.monitored:
            continue
        for k, axis in enumerate(_AXES):
            rows.append(FrameLogRecord(
                frame_index=record.frame_index, axis=axis,
                error=float(record.true_error[k]), pl=float(record.pl[k]),
                three_sigma=float(record.three_sigma[k]),
                sigma=float(record.sigma[k]), status=record.status.value))
    return rows


def _write_lines(path: str | Path, header: str, rows: Iterable[str]) -> None:
    text = "\n".join([header, *rows])
    Path(path).write_text(text + "\n", encoding="utf-8", newline="\n")


def _fmt(value: float) -> str:
    """Shortest exact decimal form, also for numpy scalars."""
    return repr(float(value))


def _data_lines(path: str | Path, header: str) -> list[tuple[int, str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"not UTF-8 text: {exc}", line=1) from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != header:
        raise FormatError(f"expected header {header!r}", line=1)
    return [(n, s) for n, s in enumerate(lines[1:], start=2) if s.strip()]


def _split(line: str, n_fields: int, line_no: int) -> list[str]:
    parts = line.split(",")
    if len(parts) != n_fields:
        raise FormatError(f"expected {n_fields} fields, got {len(parts)}",
                          line=line_no)
    return parts


def write_trials(records: Iterable[TrialRecord | FrameLogRecord],
                 path: str | Path) -> None:
    rows = []
    for item in records:
        if isinstance(item, TrialRecord):
            rows.extend(trial_rows([item]))
        else:
            rows.append(item)
    _write_lines(path, TRIALS_HEADER,
                 (f"{r.frame_index},{r.axis},{_fmt(r.error)},{_fmt(r.pl)},"
                  f"{_fmt(r.three_sigma)},{_fmt(r.sigma)},{r.status}"
                  for r in rows))


def read_trials(path: str | Path) -> list[FrameLogRecord]:
    rows = []
    for line_no, line in _data_lines(path, TRIALS_HEADER):
        parts = _split(line, 7, line_no)
        try:
            rows.append(FrameLogRecord(
                frame_index=int(parts[0]), axis=parts[1],
                error=float(parts[2]), pl=float(parts[3]),
                three_sigma=float(parts[4]), sigma=float(parts[5]),
                status=parts[6]))
        except ValueError as exc:
            raise FormatError(str(exc), line=line_no) from exc
    return rows


def write_map(landmarks: Mapping[int, Landmark], path: str | Path) -> None:
    _write_lines(path, MAP_HEADER,
                 (f"{lid},{_fmt(lm.position[0])},{_fmt(lm.position[1])},"
                  f"{_fmt(lm.position[2])}"
                  for lid, lm in sorted(landmarks.items())))


def read_map(path: str | Path) -> dict[int, Landmark]:
    landmarks: dict[int, Landmark] = {}
    for line_no, line in _data_lines(path, MAP_HEADER):
        parts = _split(line, 4, line_no)
        try:
            lid = int(parts[0])
            landmark = Landmark(lid, np.array([float(p) for p in parts[1:]]))
        except ValueError as exc:
            raise FormatError(str(exc), line=line_no) from exc
        if lid in landmarks:
            raise FormatError(f"duplicate landmark_id {lid}", line=line_no)
        landmarks[lid] = landmark
    return landmarks


def write_frames(frames: Mapping[int, Frame], path: str | Path) -> None:
    def rows() -> Iterable[str]:
        for index in sorted(frames):
            for obs in frames[index].observations:
                u, v, d = obs.measurement
                q = obs.covariance
                yield (f"{index},{obs.landmark_id},{_fmt(u)},{_fmt(v)},"
                       f"{_fmt(d)},{_fmt(q[0, 0])},{_fmt(q[0, 1])},"
                       f"{_fmt(q[0, 2])},{_fmt(q[1, 1])},{_fmt(q[1, 2])},"
                       f"{_fmt(q[2, 2])}")
    _write_lines(path, FRAMES_HEADER, rows())


def read_frames(path: str | Path) -> dict[int, Frame]:
    grouped: dict[int, list[Observation]] = {}
    seen: dict[int, set[int]] = {}
    for line_no, line in _data_lines(path, FRAMES_HEADER):
        parts = _split(line, 11, line_no)
        try:
            index = int(parts[0])
            lid = int(parts[1])
            u, v, d, q11, q12, q13, q22, q23, q33 = (float(p) for p in parts[2:])
            covariance = np.array([[q11, q12, q13],
                                   [q12, q22, q23],
                                   [q13, q23, q33]])
            obs = Observation(lid, np.array([u, v, d]), covariance)
        except ValueError as exc:
            raise FormatError(str(exc), line=line_no) from exc
        if lid in seen.setdefault(index, set()):
            raise FormatError(f"duplicate landmark {lid} in frame {index}",
                              line=line_no)
        seen[index].add(lid)
        grouped.setdefault(index, []).append(obs)
    return {index: Frame(tuple(obs)) for index, obs in sorted(grouped.items())}


@dataclass(frozen=True)
class ReportRow:
    """One frame verdict in the reports format.  Bounds are None for
    frames that were not monitored."""

    frame_index: int
    status: str
    weighted_rss: float
    threshold: float
    pl: tuple[float, float, float] | None
    sigma: tuple[float, float, float] | None
    removed_ids: tuple[int, ...]
    reason: str


def report_row(index: int, report: IntegrityReport) -> ReportRow:
    bounds = report.axis_bounds
    return ReportRow(frame_index=index, status=report.status.value,
                     weighted_rss=report.weighted_rss,
                     threshold=report.threshold,
                     pl=tuple(b.pl for b in bounds) if bounds else None,
                     sigma=tuple(b.sigma for b in bounds) if bounds else None,
                     removed_ids=report.outlier_ids, reason=report.reason)


def write_reports(rows: Sequence[ReportRow], path: str | Path) -> None:
    """Monitoring results for externally supplied logs, one row per frame.

    ``removed_ids`` is semicolon-joined; commas in the failure reason are
    replaced so rows stay plain comma joins.
    """
    def lines() -> Iterable[str]:
        for row in rows:
            pl = ([_fmt(v) for v in row.pl] if row.pl is not None
                  else [""] * 3)
            sigma = ([_fmt(v) for v in row.sigma] if row.sigma is not None
                     else [""] * 3)
            removed = ";".join(str(i) for i in row.removed_ids)
            reason = row.reason.replace(",", ";")
            yield (f"{row.frame_index},{row.status},"
                   f"{_fmt(row.weighted_rss)},{_fmt(row.threshold)},"
                   f"{','.join(pl)},{','.join(sigma)},{removed},{reason}")
    _write_lines(path, REPORTS_HEADER, lines())


def write_summary(rows: Iterable["SummaryRow"], path: str | Path) -> None:
    _write_lines(path, SUMMARY_HEADER,
                 (f"{r.axis},{r.method},{_fmt(r.bounding_rate)},"
                  f"{_fmt(r.rbt)},{r.n}" for r in rows))


def write_cdf(rows: Iterable["CdfRow"], path: str | Path) -> None:
    _write_lines(path, CDF_HEADER,
                 (f"{r.method},{r.axis},{_fmt(r.diff)},{_fmt(r.cum_fraction)}"
                  for r in rows))
