"""Truncated resolvents, their log-moment transform Lambda, and its Legendre dual Lambda*.

Every function here takes the spectral point ``y <= -sqrt 2``. The truncation width
``delta`` defaults to the widest admissible value ``-sqrt 2 - y``, which makes the
truncated resolvent coincide with ``1/(x - y)`` on the whole semicircle support.
At ``y = -sqrt 2`` the default width is 0 and all formulas are their continuous
limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .semicircle import SQRT2, _outer_root, _scalar_or_array, stieltjes_m

POLE_TOL = 1e-12


class Branch(str, Enum):
    INTERIOR = "interior"
    LINEAR = "linear-boundary"
    INFINITE = "endpoint-s-infinity"


def _check_y(y: float) -> None:
    if y > -SQRT2:
        raise ValueError("y must satisfy y <= -sqrt(2)")


def _width(y: float, delta: float | None) -> float:
    _check_y(y)
    widest = -SQRT2 - y
    if delta is None:
        return widest
    if delta < 0 or delta > widest + 1e-15 or (delta == 0 and widest > 0):
        raise ValueError(f"delta must lie in (0, {widest}]")
    return delta


@dataclass(frozen=True)
class TruncatedResolvent:
    """``1/(x - y)`` above ``y + delta``, a linear ramp on ``[y, y + delta)``, zero below ``y``."""

    y: float
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        _width(self.y, self.delta)

    @property
    def sup_norm(self) -> float:
        return 1.0 / self.delta

    @property
    def lipschitz(self) -> float:
        return 1.0 / self.delta**2

    def __call__(self, x):
        return f_eval(self, x)


def f_eval(tr: TruncatedResolvent, x):
    x = np.asarray(x, dtype=float)
    gap = x - tr.y
    with np.errstate(divide="ignore"):
        far = 1.0 / np.where(gap > 0, gap, 1.0)
    out = np.where(gap >= tr.delta, far, np.where(gap >= 0, gap / tr.delta**2, 0.0))
    return _scalar_or_array(out, x)


def lambda_transform(y: float, t, delta: float | None = None):
    """``Lambda(t) = m(y) t - 1/2 integral log(1 + 2 t f(x))`` against the semicircle law.

    Finite for ``t >= -delta/2``; ``inf`` below.  Evaluated through
    ``w = y - 2t`` as ``m(y) t - [y m(y) - w m(w)]/4 - log(m(y)/m(w))/2``, which is
    the usual closed form with the large terms cancelled analytically.
    """
    delta = _width(y, delta)
    t = np.asarray(t, dtype=float)
    ok = t >= -delta / 2.0
    w = np.where(ok, y - 2.0 * t, y)
    my, mw = stieltjes_m(y), stieltjes_m(w)
    val = my * t - 0.25 * (y * my - w * mw) - 0.5 * np.log(my / mw)
    return _scalar_or_array(np.where(ok, val, math.inf), t)


def lambda_prime(y: float, t):
    """``Lambda'(t) = m(y) - m(y - 2t)`` for ``t >= (sqrt 2 + y)/2``."""
    _check_y(y)
    t = np.asarray(t, dtype=float)
    if np.any(t < (SQRT2 + y) / 2.0):
        raise ValueError("t below the left end of the domain of Lambda")
    return _scalar_or_array(stieltjes_m(y) - stieltjes_m(y - 2.0 * t), t)


def exposed_threshold(y: float, delta: float | None = None) -> float:
    """Left end of the exposed range of Lambda*; equals ``m(y) - sqrt 2`` for the widest truncation."""
    delta = _width(y, delta)
    return stieltjes_m(y) - stieltjes_m(y + delta)


def tau_s(y: float, s):
    """Exposing point: the ``t`` with ``Lambda'(t) = s``, for ``m(y) - sqrt 2 <= s < m(y)``."""
    _check_y(y)
    s = np.asarray(s, dtype=float)
    my = stieltjes_m(y)
    if np.any(s < exposed_threshold(y) - 1e-13) or np.any(s >= my):
        raise ValueError("s outside the exposed range [m(y) - sqrt 2, m(y))")
    return _scalar_or_array((s * s + 2.0 * s * _outer_root(y)) / (4.0 * (my - s)), s)


def lambda_star(y: float, s, delta: float | None = None):
    """Legendre transform ``sup_t [s t - Lambda(t)]``.

    Interior branch ``-s^2/8 - s/(2m) - log(1 - s/m)/2`` above the exposed
    threshold, linear continuation below it, ``inf`` for ``s`` at or beyond ``m(y)``.
    """
    return _lambda_star_and_branch(y, s, delta)[0]


def lambda_star_widest(y, s):
    """Lambda* for the widest truncation, vectorized jointly over ``y`` and ``s``."""
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    my = stieltjes_m(y)
    pole = s >= my - POLE_TOL
    linear = (s <= my - SQRT2) & ~pole
    q = np.where(pole | linear, 0.0, s / my)
    interior = -s * s / 8.0 - s / (2.0 * my) - 0.5 * np.log1p(-q)
    edge_t = (SQRT2 + y) / 2.0
    edge_value = my * edge_t - 0.25 * (y * my + 2.0) - 0.5 * np.log(my / SQRT2)
    return np.where(pole, math.inf, np.where(linear, edge_t * s - edge_value, interior))


def _lambda_star_and_branch(y, s, delta=None):
    delta = _width(y, delta)
    s = np.asarray(s, dtype=float)
    my = stieltjes_m(y)
    thr = my - stieltjes_m(y + delta)
    pole = s >= my - POLE_TOL
    linear = (s <= thr) & ~pole
    q = np.where(pole | linear, 0.0, s / my)
    interior = -s * s / 8.0 - s / (2.0 * my) - 0.5 * np.log1p(-q)
    edge_value = float(lambda_transform(y, -delta / 2.0, delta)) if delta > 0 else 0.0
    lin = -s * delta / 2.0 - edge_value
    val = np.where(pole, math.inf, np.where(linear, lin, interior))
    branch = np.where(pole, Branch.INFINITE.value, np.where(linear, Branch.LINEAR.value, Branch.INTERIOR.value))
    return _scalar_or_array(val, s), (str(branch) if np.ndim(s) == 0 else branch)


@dataclass(frozen=True)
class RateBundle:
    """Lambda and its dual at ``s``, together with the exposing point ``tau``."""

    y: float
    s: float
    lambda_value: float
    lambda_prime: float
    lambda_star: float
    tau: float
    branch: Branch


def rate_bundle(y: float, s: float) -> RateBundle:
    val, branch = _lambda_star_and_branch(y, s)
    branch = Branch(branch)
    if branch is Branch.INFINITE:
        return RateBundle(y, s, math.inf, stieltjes_m(y), math.inf, math.inf, branch)
    tau = (SQRT2 + y) / 2.0 if branch is Branch.LINEAR else tau_s(y, s)
    return RateBundle(
        y=y,
        s=s,
        lambda_value=float(lambda_transform(y, tau)),
        lambda_prime=float(lambda_prime(y, tau)),
        lambda_star=val,
        tau=tau,
        branch=branch,
    )
