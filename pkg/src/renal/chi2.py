"""Chi-square distribution functions used by the transition test."""

import math
import sys

from scipy.optimize import brentq
from scipy.special import gammainc, gammaincc

from renal.errors import InvalidInputError

_RTOL = 4 * sys.float_info.epsilon


def _check(x, dof):
    if not math.isfinite(x):
        raise InvalidInputError(f"x must be finite, got {x!r}")
    if x < 0:
        raise InvalidInputError(f"x must be nonnegative, got {x!r}")
    if int(dof) != dof or dof < 1:
        raise InvalidInputError(f"dof must be a positive integer, got {dof!r}")


def chi_square_cdf(x: float, dof: int) -> float:
    """P(X <= x) for X ~ chi2(dof), i.e. the regularized gamma P(dof/2, x/2)."""
    _check(x, dof)
    return float(gammainc(0.5 * dof, 0.5 * x))


def chi_square_sf(x: float, dof: int) -> float:
    """Upper tail P(X > x), computed directly to keep precision near 0."""
    _check(x, dof)
    return float(gammaincc(0.5 * dof, 0.5 * x))


def wilson_hilferty(prob: float, dof: int) -> float:
    """Cube-root normal approximation to the chi-square quantile."""
    from statistics import NormalDist

    z = NormalDist().inv_cdf(prob)
    c = 2.0 / (9.0 * dof)
    return max(dof * (1.0 - c + z * math.sqrt(c)) ** 3, 0.0)


def chi_square_quantile(prob: float, dof: int) -> float:
    """Inverse of :func:`chi_square_cdf` by bracketed root finding."""
    if not 0.0 < prob < 1.0:
        raise InvalidInputError(f"prob must lie in (0, 1), got {prob!r}")
    if int(dof) != dof or dof < 1:
        raise InvalidInputError(f"dof must be a positive integer, got {dof!r}")

    def f(x):
        return gammainc(0.5 * dof, 0.5 * x) - prob

    guess = wilson_hilferty(prob, dof)
    lo, hi = 0.5 * guess, max(2.0 * guess, 1.0)
    if f(lo) > 0:
        lo = 0.0
    while f(hi) < 0:
        hi *= 2.0
    return brentq(f, lo, hi, xtol=1e-14, rtol=_RTOL, maxiter=500)
