"""Statistical utilities: chi-square quantiles, generalized eigenvalues, and
the relaxed bound tightness (RBT) score for comparing error bounds.

RBT scores a sequence of (bound, error, sigma) samples by the normalized gap
between bound and error, penalizing violated bounds (bound < error) by a
factor ``tau``.  Lower is better: a bound that hugs the error tightly while
rarely undershooting it wins.  ``solve_tau`` calibrates the penalty so that
for unit Gaussian error magnitudes the ideal constant bound, the one sized
to hold with probability ``p_d``, minimizes the expected score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize, stats
from scipy.integrate import quad
from scipy.linalg import solve_triangular

from .errors import (EmptySampleSet, InvalidProbability, NoSolution,
                     NotPositiveDefinite)

_TAIL_WIDTH = 12.0
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(80)


def chi2_quantile(dof: int, p: float) -> float:
    """Inverse chi-square CDF.

    Parameters
    ----------
    dof : int
        Degrees of freedom, >= 1.
    p : float
        Probability in the open interval (0, 1).
    """
    if int(dof) != dof or dof < 1:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    if not 0.0 < p < 1.0:
        raise InvalidProbability(f"p must lie in (0, 1), got {p}")
    return float(stats.chi2.ppf(p, int(dof)))


def gaussian_quantile(p: float) -> float:
    """Inverse standard normal CDF for p in the open interval (0, 1)."""
    if not 0.0 < p < 1.0:
        raise InvalidProbability(f"p must lie in (0, 1), got {p}")
    return float(stats.norm.ppf(p))


def largest_generalized_eigenvalue(a: np.ndarray, b: np.ndarray) -> float:
    """Largest eigenvalue of ``a @ inv(b)`` for symmetric a and SPD b.

    Uses the symmetric reduction ``L^-1 a L^-T`` with ``b = L L^T``, which
    shares its spectrum with ``a @ inv(b)`` and keeps the eigenproblem
    Hermitian.

    Raises
    ------
    NotPositiveDefinite
        If ``b`` has no Cholesky factorization.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = 0.5 * (a + a.T)
    try:
        chol = np.linalg.cholesky(b)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix b is not positive definite") from exc
    half = solve_triangular(chol, a, lower=True)
    reduced = solve_triangular(chol, half.T, lower=True).T
    reduced = 0.5 * (reduced + reduced.T)
    return float(np.linalg.eigvalsh(reduced)[-1])


@dataclass(frozen=True)
class BoundSample:
    """One bound-versus-error comparison: bound and error in the same units,
    sigma the estimator's 1-sigma scale used for normalization."""

    bound: float
    error: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.bound) and math.isfinite(self.error)
                and math.isfinite(self.sigma)):
            raise ValueError("bound, error and sigma must be finite")
        if self.error < 0.0:
            raise ValueError("error must be a nonnegative magnitude")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")


def relaxed_bound_tightness(samples: Sequence[BoundSample], tau: float) -> float:
    """RBT score: RMS of sigma-normalized bound-to-error gaps, with gaps of
    violated bounds (bound < error) inflated by the penalty ``tau``.

    Raises
    ------
    EmptySampleSet
        If no samples are given.
    """
    if tau < 1.0:
        raise ValueError(f"tau must be >= 1, got {tau}")
    if len(samples) == 0:
        raise EmptySampleSet("RBT requires at least one sample")
    total = 0.0
    for s in samples:
        gap = (s.bound - s.error) / s.sigma
        weight = 1.0 if s.bound >= s.error else tau
        total += weight * gap * gap
    return math.sqrt(total / len(samples))


def ideal_bound(p_d: float) -> float:
    """Constant bound, in sigmas, that holds a |N(0,1)| error with
    probability p_d."""
    if not 0.0 < p_d < 1.0:
        raise InvalidProbability(f"p_d must lie in (0, 1), got {p_d}")
    return gaussian_quantile(1.0 - (1.0 - p_d) / 2.0)


def _gauss_pdf(t):
    return np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)


def expected_rbt_objective(bound, tau: float):
    """Expected penalized squared gap ``E[rho * (bound - |e|)^2]`` for
    ``e ~ N(0, 1)``, with rho = 1 where the bound holds and tau where it is
    violated.  Accepts a scalar or an array of bounds; uses fixed
    Gauss-Legendre panels on both sides of the bound.
    """
    nu = np.atleast_1d(np.asarray(bound, dtype=float))
    if np.any(nu < 0.0):
        raise ValueError("bounds must be nonnegative")

    def panel(lo, hi):
        mid = 0.5 * (hi + lo)
        rad = 0.5 * (hi - lo)
        t = mid[:, None] + rad[:, None] * _GL_NODES[None, :]
        gap = nu[:, None] - t
        vals = gap * gap * 2.0 * _gauss_pdf(t)
        return rad * (vals @ _GL_WEIGHTS)

    held = panel(np.zeros_like(nu), nu)
    violated = panel(nu, nu + _TAIL_WIDTH)
    out = held + tau * violated
    return float(out[0]) if np.isscalar(bound) or np.ndim(bound) == 0 else out


def _objective_derivative(nu: float, tau: float) -> float:
    # d/d(nu) of expected_rbt_objective, by adaptive quadrature of each side.
    def held(t):
        return 2.0 * (nu - t) * 2.0 * _gauss_pdf(t)

    left, _ = quad(held, 0.0, nu, epsabs=1e-13, epsrel=1e-12)
    right, _ = quad(held, nu, nu + _TAIL_WIDTH, epsabs=1e-13, epsrel=1e-12)
    return left + tau * right


def solve_tau(p_d: float) -> float:
    """Penalty for which the ideal constant bound is the minimizer of the
    expected RBT objective over unit Gaussian error magnitudes.

    Parameters
    ----------
    p_d : float
        Target bound-holding probability, in (0.5, 1).

    Raises
    ------
    NoSolution
        If stationarity cannot be achieved with any tau >= 1.
    """
    if not 0.5 < p_d < 1.0:
        raise InvalidProbability(f"p_d must lie in (0.5, 1), got {p_d}")
    nu_star = ideal_bound(p_d)

    def gradient(tau: float) -> float:
        return _objective_derivative(nu_star, tau)

    g_one = gradient(1.0)
    if g_one < 0.0:
        raise NoSolution(
            f"no tau >= 1 makes the bound for p_d={p_d} stationary")
    if g_one == 0.0:
        return 1.0
    hi = 2.0
    while gradient(hi) > 0.0:
        hi *= 2.0
        if hi > 1e12:
            raise NoSolution("stationarity bracket expansion failed")
    return float(optimize.brentq(gradient, 1.0, hi, xtol=1e-10, rtol=1e-14))


@dataclass(frozen=True)
class TauVerification:
    """Grid check that the ideal bound minimizes the expected objective."""

    minimizer: float
    gap: float


def verify_tau(p_d: float, tau: float, grid_step: float = 1e-3) -> TauVerification:
    """Grid-search the expected RBT objective over bounds and report how far
    the grid minimizer lands from the ideal bound for ``p_d``."""
    nu_star = ideal_bound(p_d)
    grid = np.arange(0.0, 2.0 * nu_star, grid_step)
    values = expected_rbt_objective(grid, tau)
    minimizer = float(grid[int(np.argmin(values))])
    return TauVerification(minimizer=minimizer, gap=abs(minimizer - nu_star))


@dataclass(frozen=True)
class RbtConfig:
    """Scoring configuration: bound-holding target and optional tau override."""

    p_d: float = 0.9973
    tau: float | None = None

    def __post_init__(self):
        if not 0.5 < self.p_d < 1.0:
            raise InvalidProbability(f"p_d must lie in (0.5, 1), got {self.p_d}")
        if self.tau is not None and self.tau < 1.0:
            raise ValueError(f"tau must be >= 1, got {self.tau}")

    def resolved_tau(self) -> float:
        from .constants import DEFAULT_PD, DEFAULT_TAU
        if self.tau is not None:
            return self.tau
        if self.p_d == DEFAULT_PD:
            return DEFAULT_TAU
        return solve_tau(self.p_d)
