"""Correlators with isotropic increments and the coefficients of the conditional Hessian law.

A correlator ``D`` enters the model through ``E[(X(x) - X(y))^2] = N D(|x - y|^2 / N)``.
Every quantity here depends on ``D`` only through its values and derivatives at
``r = rho^2`` and at ``r = 0``.

Conventions used throughout the package:

* ``d1, d2, d4`` are ``D'(0), D''(0), D''''(0)``.
* ``J = sqrt(-2 D''(0))``.
* ``sY`` is the normalized variance of the radial energy ``D(r) - D'(r)^2 r / D'(0)``.
* ``t`` and ``alpha`` are the radial coefficients ``(D'(r) - D'(0)) / sqrt(sY)`` and
  ``2 D''(r) / sqrt(sY)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .semicircle import stieltjes_m

Derivatives = tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]

BUILTIN_NAMES = ("log-correlator", "exponential-mixture", "user-table")


class AssumptionError(ValueError):
    """Raised when the non-degeneracy conditions on the conditional Hessian law fail."""


@dataclass(frozen=True)
class StructureFunction:
    """A correlator ``D`` together with its first four derivatives.

    ``derivs(r)`` returns the 5-tuple ``(D, D', D'', D''', D'''')`` evaluated
    elementwise on ``r``.  ``d1_increment(r)``, when supplied, returns
    ``D'(r) - D'(0)`` without cancellation; otherwise the difference is formed
    directly.
    """

    name: str
    derivs: Callable[[np.ndarray], Derivatives] = field(repr=False)
    d1_increment: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def eval(self, r) -> Derivatives:
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("correlator is only defined for r >= 0")
        return self.derivs(r)

    def increment(self, r) -> np.ndarray:
        """``D'(r) - D'(0)``."""
        r = np.asarray(r, dtype=float)
        if self.d1_increment is not None:
            return self.d1_increment(r)
        return self.eval(r)[1] - self.d1

    @property
    def at_zero(self) -> tuple[float, float, float, float, float]:
        return tuple(float(v) for v in self.eval(0.0))  # type: ignore[return-value]

    @property
    def d1(self) -> float:
        return self.at_zero[1]

    @property
    def d2(self) -> float:
        return self.at_zero[2]

    @property
    def d3(self) -> float:
        return self.at_zero[3]

    @property
    def d4(self) -> float:
        return self.at_zero[4]

    def validate(self) -> None:
        d0, d1, d2, _, d4 = self.at_zero
        if abs(d0) > 1e-12:
            raise ValueError(f"D(0) must vanish, got {d0}")
        if not d1 > 0:
            raise ValueError(f"D'(0) must be positive, got {d1}")
        if not d2 < 0:
            raise ValueError(f"D''(0) must be negative, got {d2}")
        if not (0 < abs(d4) < math.inf):
            raise ValueError(f"D''''(0) must be finite and nonzero, got {d4}")


@dataclass(frozen=True)
class FieldParams:
    """Model input: correlator plus confinement strength ``mu``."""

    D: StructureFunction
    mu: float

    @property
    def J(self) -> float:
        return math.sqrt(-2.0 * self.D.d2)

    @property
    def root_neg_d2(self) -> float:
        """``sqrt(-D''(0))``."""
        return math.sqrt(-self.D.d2)


@dataclass(frozen=True)
class GeometryCoeffs:
    rho: float
    alpha: float
    t: float
    m1: float
    m2: float
    n_sigma1_sq: float
    n_sigma2_sq: float
    mY: float
    n_sigmaY_sq: float
    b_sq: float
    a_bar: float | None
    a: float | None
    v: float


@dataclass(frozen=True)
class RadialProfile:
    """Arrays of the ``rho``-only coefficients, broadcast over ``rho``."""

    rho: np.ndarray
    sY: np.ndarray
    alpha: np.ndarray
    t: np.ndarray
    d1r: np.ndarray
    increment: np.ndarray

    @property
    def alpha_r(self) -> np.ndarray:
        """``alpha * rho^2``."""
        return self.alpha * self.rho**2


@dataclass(frozen=True)
class AssumptionReport:
    holds: bool
    failures: list[float]
    limit_margins: dict[str, float]


# --- built-ins ---------------------------------------------------------------


def _log_correlator(c: float, s: float) -> StructureFunction:
    def derivs(r):
        x = s + r
        return (
            c * np.log1p(r / s),
            c / x,
            -c / x**2,
            2.0 * c / x**3,
            -6.0 * c / x**4,
        )

    return StructureFunction(
        name="log-correlator", derivs=derivs, d1_increment=lambda r: -c * r / (s * (s + r))
    )


def _exponential_mixture(c: float, s: float) -> StructureFunction:
    def derivs(r):
        e = np.exp(-s * r)
        return (-c * np.expm1(-s * r), c * s * e, -c * s**2 * e, c * s**3 * e, -c * s**4 * e)

    return StructureFunction(
        name="exponential-mixture", derivs=derivs, d1_increment=lambda r: c * s * np.expm1(-s * r)
    )


def load_table(path: str | Path) -> StructureFunction:
    """Correlator from a two-column CSV ``r, D(r)`` (header optional).

    ``r`` must start at 0 and increase strictly.  Derivatives come from a quintic
    interpolating spline, so the fourth derivative is piecewise linear rather than
    identically zero.
    """
    from scipy.interpolate import make_interp_spline

    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                if rows:
                    raise
    if len(rows) < 6:
        raise ValueError("a correlator table needs at least 6 rows")
    r, d = np.array(rows).T
    if r[0] != 0.0 or np.any(np.diff(r) <= 0):
        raise ValueError("table r column must start at 0 and increase strictly")
    spline = make_interp_spline(r, d, k=5)
    ders = [spline.derivative(k) for k in range(1, 5)]
    rmax = r[-1]

    def derivs(x):
        if np.any(x > rmax):
            raise ValueError(f"r beyond table range {rmax}")
        return (spline(x), *(dk(x) for dk in ders))

    sf = StructureFunction(name=f"user-table:{Path(path).name}", derivs=derivs)
    sf.validate()
    return sf


def from_callable(func: Callable[[np.ndarray], np.ndarray], name: str = "user-formula") -> StructureFunction:
    """Correlator from a plain function ``D(r)`` using central 5-point differences.

    Steps scale as ``h_k * max(1, r)`` with ``h_1 = 1e-5`` for the first derivative
    and ``h_2 = 1e-3``, ``h_3 = h_4 = 1e-2`` for the higher ones, which keeps the
    round-off of the higher stencils below their truncation error.  ``func`` must
    accept slightly negative ``r``.
    """
    steps = (1e-5, 1e-3, 1e-2, 1e-2)

    def derivs(r):
        r = np.asarray(r, dtype=float)
        scale = np.maximum(1.0, r)
        h1, h2, h3, h4 = (s * scale for s in steps)

        def f(dx):
            return np.asarray(func(r + dx), dtype=float)

        d1 = (f(-2 * h1) - 8 * f(-h1) + 8 * f(h1) - f(2 * h1)) / (12 * h1)
        d2 = (-f(2 * h2) + 16 * f(h2) - 30 * f(0.0) + 16 * f(-h2) - f(-2 * h2)) / (12 * h2**2)
        d3 = (f(2 * h3) - 2 * f(h3) + 2 * f(-h3) - f(-2 * h3)) / (2 * h3**3)
        d4 = (f(2 * h4) - 4 * f(h4) + 6 * f(0.0) - 4 * f(-h4) + f(-2 * h4)) / h4**4
        return f(0.0), d1, d2, d3, d4

    sf = StructureFunction(name=name, derivs=derivs)
    sf.validate()
    return sf


def make_builtin(name: str, params: Sequence[float] = (), *, table: str | Path | None = None) -> StructureFunction:
    """Build a named correlator.

    ``log-correlator`` and ``exponential-mixture`` take ``params = (c, s)``
    (defaults ``(1, 1)``); ``user-table`` needs ``table``.
    """
    if name == "user-table":
        if table is None:
            raise ValueError("user-table requires a table path")
        return load_table(table)
    if name not in BUILTIN_NAMES:
        raise ValueError(f"unknown correlator {name!r}; expected one of {BUILTIN_NAMES}")
    params = tuple(float(p) for p in params)
    if len(params) > 2:
        raise ValueError(f"{name} takes at most two parameters (c, s)")
    c, s = params + (1.0, 1.0)[len(params):]
    if not (c > 0 and s > 0):
        raise ValueError(f"{name} needs c > 0 and s > 0 so that D'(0) > 0 and D''(0) < 0")
    sf = _log_correlator(c, s) if name == "log-correlator" else _exponential_mixture(c, s)
    sf.validate()
    return sf


# --- radial coefficients -------------------------------------------------------


def radial_profile(D: StructureFunction, rho) -> RadialProfile:
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("rho must be positive")
    r = rho**2
    Dr, d1r, d2r, _, _ = D.eval(r)
    inc = D.increment(r)
    sY = Dr - d1r**2 * r / D.d1
    root = np.sqrt(np.where(sY > 0, sY, np.nan))
    return RadialProfile(rho=rho, sY=sY, alpha=2.0 * d2r / root, t=inc / root, d1r=d1r, increment=inc)


def sigma_margins(D: StructureFunction, prof: RadialProfile) -> tuple[np.ndarray, np.ndarray]:
    """``(N sigma_1^2, N sigma_2^2)``; both positive exactly when the non-degeneracy assumption holds."""
    ar, t = prof.alpha_r, prof.t
    return -4.0 * D.d2 - (ar + t) * ar, -2.0 * D.d2 - (ar + t) * t


def b_squared(D: StructureFunction, prof: RadialProfile) -> np.ndarray:
    """Conditional variance (times N) of the radial Hessian entry, closed form."""
    return -4.0 * D.d2 + 2.0 * D.d2 * prof.alpha_r**2 / (-2.0 * D.d2 - prof.t**2)


def energy_mean(fp: FieldParams, prof: RadialProfile) -> np.ndarray:
    r = prof.rho**2
    return fp.mu * r / 2.0 - fp.mu * prof.d1r * r / fp.D.d1


def small_rho_limits(D: StructureFunction) -> dict[str, float]:
    """Limits of the radial coefficients as ``rho -> 0``.

    Besides the three limits of ``t^2``, ``alpha t rho^2`` and ``(alpha rho^2)^2``
    this returns the limit of ``sY / rho^4`` and the slopes (coefficients of
    ``rho^2``) of both variance margins.  The margins themselves tend to 0, so
    their slopes decide whether the assumption holds near the origin.
    """
    _, d1, d2, d3, _ = D.at_zero
    a2 = -1.5 * d2
    a3 = -5.0 * d3 / 6.0 - d2**2 / d1
    return {
        "t_sq": -2.0 * d2 / 3.0,
        "alpha_t_rho2": -4.0 * d2 / 3.0,
        "alpha_rho2_sq": -8.0 * d2 / 3.0,
        "sY_over_rho4": a2,
        "margin1_limit": -2.0 * d2 - (-2.0 * d2 / 3.0) - (-4.0 * d2 / 3.0),
        "margin2_limit": -4.0 * d2 - (-8.0 * d2 / 3.0) - (-4.0 * d2 / 3.0),
        "margin1_slope": -4.0 * d2 * d3 / a2 + 3.0 * d2**2 * a3 / a2**2,
        "margin2_slope": -11.0 * d2 * d3 / a2 + 6.0 * d2**2 * a3 / a2**2,
    }


def check_assumptions(D: StructureFunction, rho_max: float, n_grid: int) -> AssumptionReport:
    """Check both variance margins on a geometric grid ``[1e-3 rho_max', rho_max]`` and at ``rho -> 0``.

    The grid starts at ``min(1e-3, rho_max / 10)`` because below that the margins
    are of order ``rho^2`` and lose their sign to round-off; the small-``rho``
    behaviour is decided by the analytic slopes instead.
    """
    if not rho_max > 0 or n_grid < 2:
        raise ValueError("need rho_max > 0 and n_grid >= 2")
    grid = np.geomspace(min(1e-3, rho_max / 10.0), rho_max, n_grid)
    prof = radial_profile(D, grid)
    s1, s2 = sigma_margins(D, prof)
    _, d1r, d2r, _, _ = D.eval(grid**2)
    bad = ~((s1 > 0) & (s2 > 0) & (prof.sY > 0) & (d1r >= 0) & (d2r <= 0))
    limits = small_rho_limits(D)
    failures = [float(x) for x in grid[bad]]
    if not (limits["margin1_slope"] > 0 and limits["margin2_slope"] > 0):
        failures.insert(0, 0.0)
    return AssumptionReport(holds=not failures, failures=failures, limit_margins=limits)


def a_coefficient(fp: FieldParams, prof: RadialProfile, v, y) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(a_bar, a)``: conditional mean of the radial entry given the bulk shift ``y``, and its recentred version."""
    d2 = fp.D.d2
    ar, t = prof.alpha_r, prof.t
    den = -2.0 * d2 - t**2
    a_bar = (-2.0 * d2 * ar * v + ar * t * fp.mu - (den - ar * t) * math.sqrt(-4.0 * d2) * y) / den
    return a_bar, a_bar - fp.root_neg_d2 * stieltjes_m(y)


def geometry_coeffs(fp: FieldParams, rho: float, u: float, y: float | None = None) -> GeometryCoeffs:
    """All coefficients of the conditional Hessian law at radius ``rho`` and energy ``u``.

    ``a_bar`` and ``a`` are filled only when ``y`` is given (``y <= -sqrt 2``).
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    D = fp.D
    prof = radial_profile(D, rho)
    s1, s2 = (float(x) for x in sigma_margins(D, prof))
    b2 = float(b_squared(D, prof))
    if not (s1 > 0 and s2 > 0 and b2 > 0 and prof.sY > 0):
        raise AssumptionError(f"variance margins not positive at rho={rho}: {s1}, {s2}, b^2={b2}")
    mY = float(energy_mean(fp, prof))
    sY = float(prof.sY)
    v = (u - mY) / math.sqrt(sY)
    ar, t = float(prof.alpha_r), float(prof.t)
    a_bar = a = None
    if y is not None:
        a_bar, a = (float(x) for x in a_coefficient(fp, prof, v, y))
    return GeometryCoeffs(
        rho=float(rho),
        alpha=float(prof.alpha),
        t=t,
        m1=fp.mu + v * (ar + t),
        m2=fp.mu + v * t,
        n_sigma1_sq=s1,
        n_sigma2_sq=s2,
        mY=mY,
        n_sigmaY_sq=sY,
        b_sq=b2,
        a_bar=a_bar,
        a=a,
        v=v,
    )
