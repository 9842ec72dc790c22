"""Integrity monitoring for optimization-based stereo visual localization.

The package detects measurement faults in a single stereo frame with a
parity-space chi-square test, excludes outliers iteratively, and computes
per-axis protection levels that bound the largest position error a fault
could induce without tripping the detector.  A Monte Carlo harness, a CSV
interchange layer, a FastAPI service, and a thin-client CLI sit on top.
"""

__version__ = "0.1.0"
