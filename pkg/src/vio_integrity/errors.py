"""Typed errors shared across the package.

Every failure mode that callers are expected to branch on gets its own
class so the service and CLI can report a stable category name
(``type(exc).__name__``) alongside the message.
"""

from __future__ import annotations


class VioIntegrityError(Exception):
    """Base class for all package-specific errors."""


class DepthNonPositive(VioIntegrityError):
    """A point sits at or behind the minimum-depth cutoff of the camera.

    Attributes
    ----------
    depth : float
        Offending z value in the camera frame (meters).
    landmark_id : int or None
        Identifier of the offending landmark when known.
    """

    def __init__(self, message: str, *, depth: float = float("nan"),
                 landmark_id: int | None = None):
        super().__init__(message)
        self.depth = depth
        self.landmark_id = landmark_id


class DegenerateGeometry(VioIntegrityError):
    """The normal matrix is singular or too ill-conditioned to invert."""


class DivergedBehindCamera(VioIntegrityError):
    """Pose iterations pushed a landmark to an invalid depth."""


class InsufficientRedundancy(VioIntegrityError):
    """Fewer measurements than needed for a residual test (dof < 1)."""


class SingularFaultProjection(VioIntegrityError):
    """A fault-restricted residual information block is numerically singular."""


class InvalidProbability(VioIntegrityError):
    """A probability argument lies outside its documented open interval."""


class NotPositiveDefinite(VioIntegrityError):
    """A matrix required to be symmetric positive definite is not."""


class EmptySampleSet(VioIntegrityError):
    """A statistic was requested over zero samples."""


class NoSolution(VioIntegrityError):
    """A root-finding problem has no admissible solution."""


class InfeasibleScene(VioIntegrityError):
    """Scene sampling could not satisfy the visibility constraints."""


class FormatError(VioIntegrityError):
    """A CSV or config file violates its documented layout.

    Attributes
    ----------
    line : int or None
        1-based line number of the offending record when known.
    """

    def __init__(self, message: str, *, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(VioIntegrityError):
    """A scenario config contains unknown keys or unparseable values."""
