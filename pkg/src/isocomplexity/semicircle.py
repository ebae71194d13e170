"""Semicircle law on [-sqrt 2, sqrt 2]: log-potential, Stieltjes transform, edge rate, quantiles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

SQRT2 = math.sqrt(2.0)
LOG2 = math.log(2.0)
EDGE_TOL = 2e-15


def _outer_root(y):
    # sqrt(y^2 - 2) in factored form, exactly 0 at the edge and clipped inside the support
    ay = np.abs(y)
    return np.sqrt(np.maximum((ay - SQRT2) * (ay + SQRT2), 0.0))


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def semicircle_density(x):
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.maximum(2.0 - x * x, 0.0)) / math.pi


def semicircle_cdf(s):
    s = np.clip(np.asarray(s, dtype=float), -SQRT2, SQRT2)
    out = 0.5 + (s * np.sqrt(np.maximum(2.0 - s * s, 0.0)) / 2.0 + np.arcsin(s / SQRT2)) / math.pi
    return _scalar_or_array(out, s)


def psi_star_potential(x):
    """``integral of log|x - t|`` against the semicircle law."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    inner = 0.5 * x * x - 0.5 - 0.5 * LOG2
    root = _outer_root(ax)
    with np.errstate(divide="ignore", invalid="ignore"):
        outer = ax / (ax + root) - 0.5 - LOG2 + np.log(ax + root)
    return _scalar_or_array(np.where(ax <= SQRT2, inner, outer), x)


def stieltjes_m(y):
    """``m(y) = -y - sqrt(y^2 - 2)`` for ``y <= -sqrt 2``; raises above the edge.

    Points within ``EDGE_TOL`` of the edge on either side are snapped to it:
    ``m`` has a square-root singularity there, so one ulp of rounding in
    ``y + delta`` would otherwise move it by about ``1e-8``.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y > -SQRT2 + EDGE_TOL):
        raise ValueError("the Stieltjes transform is only used for y <= -sqrt(2)")
    y = np.where(np.abs(y + SQRT2) <= EDGE_TOL, -SQRT2, y)
    return _scalar_or_array(2.0 / (-y + _outer_root(y)), y)


def rate_j1(y, k: int = 1):
    """Large-deviation rate ``J_k(y) = k J_1(y)`` of the k-th smallest eigenvalue; ``inf`` above the edge."""
    y = np.asarray(y, dtype=float)
    root = _outer_root(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 0.5 * LOG2 - 0.5 * y * root - np.log(-y + root)
    val = np.where(y <= -SQRT2, np.maximum(val, 0.0), math.inf)
    return _scalar_or_array(k * val, y)


def quantile_s_gamma(gamma: float) -> float:
    """Point ``s`` where the semicircle CDF equals ``gamma``."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if gamma == 0.5:
        return 0.0
    return brentq(lambda s: semicircle_cdf(s) - gamma, -SQRT2, SQRT2, xtol=1e-15, rtol=1e-15)


@dataclass(frozen=True)
class SpectralPoint:
    y: float
    psi_star: float
    m: float | None
    j1: float

    @classmethod
    def at(cls, y: float) -> "SpectralPoint":
        return cls(
            y=y,
            psi_star=psi_star_potential(y),
            m=stieltjes_m(y) if y <= -SQRT2 else None,
            j1=rate_j1(y),
        )


@dataclass(frozen=True)
class EmpiricalSpectrum:
    eigenvalues: np.ndarray
    n: int

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if np.any(np.diff(ev) < 0):
            raise ValueError("eigenvalues must be sorted ascending")
        object.__setattr__(self, "eigenvalues", ev)

    @classmethod
    def from_values(cls, values, n: int | None = None) -> "EmpiricalSpectrum":
        ev = np.sort(np.asarray(values, dtype=float))
        return cls(ev, len(ev) + 1 if n is None else n)


def log_potential_empirical(spec: EmpiricalSpectrum, y: float) -> float:
    """Average of ``log|lambda_i - y|`` over the spectrum."""
    gaps = np.abs(spec.eigenvalues - y)
    if np.any(gaps == 0.0):
        raise ValueError(f"y={y} coincides with an eigenvalue")
    return float(np.mean(np.log(gaps)))
