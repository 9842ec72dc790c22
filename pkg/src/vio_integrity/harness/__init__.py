"""File formats, scenario configs, and campaign summaries."""

from .config import load_scenario, parse_scenario
from .io import (FrameLogRecord, ReportRow, read_frames, read_map,
                 read_trials, report_row, trial_rows, write_cdf,
                 write_frames, write_map, write_reports, write_summary,
                 write_trials)
from .summary import CdfRow, SummaryReport, SummaryRow, summarize

__all__ = [
    "CdfRow", "FrameLogRecord", "ReportRow", "SummaryReport", "SummaryRow",
    "load_scenario", "parse_scenario", "read_frames", "read_map",
    "read_trials", "report_row", "summarize", "trial_rows", "write_cdf",
    "write_frames", "write_map", "write_reports", "write_summary",
    "write_trials",
]
