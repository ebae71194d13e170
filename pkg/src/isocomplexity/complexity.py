"""Annealed complexity of critical points: variational objectives, corrections, solver, closed forms.

Shell modes optimize over radius ``rho``, energy ``u`` and spectral shift ``y``.
The energy enters only through ``v = (u - m_Y)/sqrt(sY)``. For fixed ``(rho, y)``
every objective is concave in ``v``: the main part is a concave quadratic and the
corrections are convex in ``v``. The solver therefore maximizes over ``v`` exactly
(projection or golden section) and searches ``(rho, y)`` by grid refinement.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .rate_functions import lambda_star_widest
from .semicircle import LOG2, SQRT2, psi_star_potential, quantile_s_gamma, rate_j1, stieltjes_m
from .structure_function import (
    AssumptionError,
    FieldParams,
    RadialProfile,
    a_coefficient,
    b_squared,
    check_assumptions,
    energy_mean,
    radial_profile,
)

INF = math.inf
RHO_FLOOR = 1e-4
GRID_SIZE = 64
REFINE_ROUNDS = 6
REFINE_POINTS = 9
CONTRACTION = 4.0
GOLDEN_ITERS = 80
N_STARTS = 4
SHELL_MODES = ("minima", "fixed_index", "diverging_index")
TOTAL_MODES = ("total_minima", "total_fixed_index", "total_diverging")


class HypothesisError(ValueError):
    """The query violates a hypothesis of the limit theorem it asks for."""


class Branch(str, Enum):
    J1 = "J1-branch"
    IPLUS = "Iplus-branch"
    MINIMA = "minima"
    DIVERGING = "diverging"


Interval = tuple[float, float]


def normalize_window(window) -> tuple[Interval, ...]:
    """Accept ``"all"``, one ``(lo, hi)`` pair, or a list of pairs; return sorted closed intervals."""
    if window is None or (isinstance(window, str) and window == "all"):
        return ((-INF, INF),)
    items = list(window)
    if len(items) == 2 and all(isinstance(x, (int, float, str)) for x in items):
        items = [items]
    out = []
    for lo, hi in items:
        lo, hi = float(lo), float(hi)
        if not lo < hi:
            raise ValueError(f"energy interval ({lo}, {hi}) is empty")
        out.append((lo, hi))
    return tuple(sorted(out))


@dataclass(frozen=True)
class ComplexityQuery:
    fp: FieldParams
    mode: str
    k: int | None = None
    gamma: float | None = None
    energy_window: tuple[Interval, ...] = ((-INF, INF),)
    r1: float = 0.0
    r2: float = INF
    domain_constant: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "energy_window", normalize_window(self.energy_window))
        if self.mode not in SHELL_MODES + TOTAL_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode in ("fixed_index", "total_fixed_index"):
            lowest = 1 if self.mode == "fixed_index" else 0
            if self.k is None or int(self.k) != self.k or self.k < lowest:
                raise ValueError(f"{self.mode} needs an integer k >= {lowest}")
        if self.mode in ("diverging_index", "total_diverging"):
            if self.gamma is None or not 0.0 < self.gamma < 1.0:
                raise ValueError(f"{self.mode} needs gamma in (0, 1)")
        if not (0.0 <= self.r1 < self.r2):
            raise ValueError("need 0 <= r1 < r2")
        if self.mode in TOTAL_MODES and self.domain_constant is None:
            raise ValueError("total-count modes need domain_constant")
        if self.mode in SHELL_MODES and self.fp.mu == 0.0 and math.isinf(self.r2):
            raise HypothesisError("shell modes require |mu| + 1/R2 > 0: with mu = 0 the outer radius must be finite")


@dataclass
class ComplexityResult:
    value: float
    optimizer: tuple[float, float, float]
    branch: str
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["optimizer"] = list(self.optimizer)
        return d

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ComplexityResult":
        return cls(
            value=_unjson(d["value"]),
            optimizer=tuple(_unjson(x) for x in d["optimizer"]),
            branch=d["branch"],
            diagnostics=_unjson(d.get("diagnostics", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "ComplexityResult":
        return cls.from_dict(json.loads(text))


def _jsonable(x):
    """Replace non-finite floats by strings so the output is strict JSON."""
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _unjson(x):
    if isinstance(x, dict):
        return {k: _unjson(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_unjson(v) for v in x]
    if x in ("nan", "inf", "-inf"):
        return float(x)
    return x


@dataclass(frozen=True)
class CorrectionPoint:
    rho: float
    u: float
    y: float
    a: float
    b_sq: float
    x_hat: float
    x_tilde: float
    B: float
    C: float
    i_minus: float
    i_plus: float


# --- objective pieces (vectorized) ----------------------------------------------


def _psi_from_v(fp: FieldParams, prof: RadialProfile, v, y):
    J2 = -2.0 * fp.D.d2
    t2 = prof.t**2
    rho = prof.rho
    shift = y + (fp.mu + v * prof.t) / (SQRT2 * math.sqrt(J2))
    return (
        psi_star_potential(y)
        - 0.5 * v * v
        - fp.mu**2 * rho**2 / (2.0 * fp.D.d1)
        + np.log(rho)
        - J2 / (J2 - t2) * shift**2
    )


def _v_opt(fp: FieldParams, prof: RadialProfile, y):
    """Unconstrained maximizer in ``v`` of the main part."""
    J = fp.J
    return -prof.t * (SQRT2 * J * y + fp.mu) / J**2


def _v_curvature(fp: FieldParams, prof: RadialProfile):
    J2 = -2.0 * fp.D.d2
    return J2 / (J2 - prof.t**2)


def _corrections(fp: FieldParams, prof: RadialProfile, v, y):
    """Both correction functionals and their minimizers; returns a dict of arrays."""
    c = fp.root_neg_d2
    d2 = fp.D.d2
    a = a_coefficient(fp, prof, v, y)[1]
    b2 = b_squared(fp.D, prof)
    m = stieltjes_m(y)
    B = -d2 * prof.alpha_r**2 / ((-2.0 * d2 - prof.t**2) * b2)
    C = 1.0 / m - 2.0 * c * a / b2
    disc = np.sqrt((C - B * m) ** 2 + 4.0 * B)
    x_hat = 2.0 * (C * m - 1.0) / (C + B * m + disc)

    neg = a < 0
    xm = np.where(neg, x_hat, 0.0)
    gap = np.minimum(a + c * xm, 0.0)
    i_minus = np.where(neg, lambda_star_widest(y, xm) + gap**2 / (2.0 * b2), 0.0)

    pos = a > 0
    x_lin = b2 * (SQRT2 + y) / (2.0 * d2) - a / c
    xp = np.where(x_lin <= m - SQRT2, x_lin, x_hat)
    xp = np.where(pos, xp, 0.0)
    gap = np.maximum(a + c * xp, 0.0)
    i_plus = np.where(pos, lambda_star_widest(y, xp) + gap**2 / (2.0 * b2), 0.0)
    return {"a": a, "b_sq": b2, "B": B, "C": C, "m": m, "x_hat": xm, "x_tilde": xp, "i_minus": i_minus, "i_plus": i_plus}


def _objective(kind: str, fp: FieldParams, prof: RadialProfile, v, y, k: int = 0):
    psi = _psi_from_v(fp, prof, v, y)
    if kind == "diverging":
        out = psi
    elif kind == "J1":
        out = psi - k * rate_j1(y)
    elif kind == "minima":
        out = psi - _corrections(fp, prof, v, y)["i_minus"]
    elif kind == "Iplus":
        out = psi - _corrections(fp, prof, v, y)["i_plus"] - (k - 1) * rate_j1(y)
    else:
        raise ValueError(kind)
    out = np.asarray(out, dtype=float)
    return np.where(np.isnan(out), -INF, out)


# --- public pointwise functionals ----------------------------------------------


def _energy_to_v(fp, prof, u):
    return (u - energy_mean(fp, prof)) / np.sqrt(prof.sY)


def _require_margins(fp, prof):
    from .structure_function import sigma_margins

    s1, s2 = sigma_margins(fp.D, prof)
    if np.any(~(s1 > 0)) or np.any(~(s2 > 0)) or np.any(~(prof.sY > 0)):
        raise AssumptionError(f"variance margins not positive at rho={prof.rho}")


def psi_star(fp: FieldParams, rho, u, y):
    """Main part of the complexity at radius ``rho``, energy ``u`` and spectral shift ``y``."""
    prof = radial_profile(fp.D, rho)
    _require_margins(fp, prof)
    out = _psi_from_v(fp, prof, _energy_to_v(fp, prof, u), y)
    return float(out) if np.ndim(out) == 0 else out


def psi_star_reduced(fp: FieldParams, rho, y):
    """Main part after maximizing over the energy; depends on the correlator only through D'(0), D''(0)."""
    J = fp.J
    return (
        -0.5 * np.square(y) - 0.5 - 0.5 * LOG2 - np.where(np.abs(y) > SQRT2, rate_j1(-np.abs(y)), 0.0)
        - SQRT2 * fp.mu * np.asarray(y) / J - fp.mu**2 / (2.0 * J**2)
        - fp.mu**2 * np.square(rho) / (2.0 * fp.D.d1) + np.log(rho)
    )


def energy_opt(fp: FieldParams, rho: float, y: float) -> float:
    """Energy maximizing the main part at fixed ``(rho, y)``."""
    prof = radial_profile(fp.D, rho)
    return float(energy_mean(fp, prof) + _v_opt(fp, prof, y) * np.sqrt(prof.sY))


def _correction_point(fp, rho, u, y) -> CorrectionPoint:
    if y > -SQRT2:
        raise ValueError("corrections need y <= -sqrt(2)")
    prof = radial_profile(fp.D, rho)
    _require_margins(fp, prof)
    c = _corrections(fp, prof, _energy_to_v(fp, prof, u), y)
    f = {k: float(v) for k, v in c.items()}
    return CorrectionPoint(
        rho=float(rho), u=float(u), y=float(y), a=f["a"], b_sq=f["b_sq"], x_hat=f["x_hat"],
        x_tilde=f["x_tilde"], B=f["B"], C=f["C"], i_minus=f["i_minus"], i_plus=f["i_plus"],
    )


def i_minus(fp: FieldParams, rho: float, u: float, y: float) -> CorrectionPoint:
    """Correction for local minima; ``x_hat`` is its minimizer (0 when ``a >= 0``)."""
    return _correction_point(fp, rho, u, y)


def i_plus(fp: FieldParams, rho: float, u: float, y: float) -> CorrectionPoint:
    """Correction for saddles with one eigenvalue split off; ``x_tilde`` is its minimizer (0 when ``a <= 0``)."""
    return _correction_point(fp, rho, u, y)


def reduced_objectives(fp: FieldParams, rho: float, y: float, k: int) -> tuple[float, float]:
    """Suprema over the energy of the two fixed-index branches at ``(rho, y)``.

    ``L`` uses the energy maximizing the main part; ``R`` uses the energy at which
    the saddle correction's minimizer sits on its linear branch.  Both are
    evaluated through the full pointwise functionals.
    """
    if not y < -SQRT2 + 1e-15:
        raise ValueError("need y < -sqrt(2)")
    prof = radial_profile(fp.D, rho)
    J = fp.J
    v_left = float(_v_opt(fp, prof, y))
    v_right = v_left + (SQRT2 + y) * float(prof.alpha_r) / (SQRT2 * J)
    to_u = lambda v: float(energy_mean(fp, prof) + v * np.sqrt(prof.sY))  # noqa: E731
    u_left, u_right = to_u(v_left), to_u(v_right)
    j1 = rate_j1(y)
    left = psi_star(fp, rho, u_left, y) - k * j1
    right = psi_star(fp, rho, u_right, y) - i_plus(fp, rho, u_right, y).i_plus - (k - 1) * j1
    return left, right


def energy_right_branch(fp: FieldParams, rho: float, y: float) -> float:
    """Energy at which the saddle-branch objective is maximal when the energy is unrestricted."""
    prof = radial_profile(fp.D, rho)
    v = float(_v_opt(fp, prof, y)) + (SQRT2 + y) * float(prof.alpha_r) / (SQRT2 * fp.J)
    return float(energy_mean(fp, prof) + v * np.sqrt(prof.sY))


# --- solver ----------------------------------------------------------------------


def _golden_max(f, lo, hi, iters=GOLDEN_ITERS):
    """Vectorized golden-section maximization of a concave ``f`` on ``[lo, hi]``."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo.copy(), hi.copy()
    x1, x2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        left = f1 >= f2
        a, b = np.where(left, a, x1), np.where(left, x2, b)
        x_new = np.where(left, b - g * (b - a), a + g * (b - a))
        f_new = f(x_new)
        x1, x2, f1, f2 = (
            np.where(left, x_new, x2),
            np.where(left, x1, x_new),
            np.where(left, f_new, f2),
            np.where(left, f1, f_new),
        )
    return 0.5 * (a + b)


@dataclass
class _Problem:
    kind: str
    fp: FieldParams
    k: int
    windows: tuple[Interval, ...]
    rho_lo: float
    rho_hi: float
    y_lo: float
    y_hi: float

    def inner(self, rho, y):
        """Maximize over the energy; returns (value, v, u) arrays broadcast over ``rho`` and ``y``."""
        rho, y = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(y, dtype=float))
        shape = rho.shape
        rho, y = rho.reshape(-1), y.reshape(-1)
        prof = radial_profile(self.fp.D, rho)
        mY = energy_mean(self.fp, prof)
        root = np.sqrt(prof.sY)
        v_star = _v_opt(self.fp, prof, y)
        kappa = _v_curvature(self.fp, prof)
        best_val = np.full(rho.shape, -INF)
        best_v = np.full(rho.shape, np.nan)
        for lo, hi in self.windows:
            vlo, vhi = (lo - mY) / root, (hi - mY) / root
            v_proj = np.clip(v_star, vlo, vhi)
            val = self._obj(prof, v_proj, y)
            v = v_proj
            if self.kind in ("minima", "Iplus"):
                corr_key = "i_minus" if self.kind == "minima" else "i_plus"
                corr_star = _corrections(self.fp, prof, v_star, y)[corr_key]
                exact = (corr_star == 0.0) & (v_proj == v_star)
                need = ~exact & np.isfinite(corr_star)
                if need.any():
                    width = np.sqrt(2.0 * (corr_star + 1.0) / kappa)
                    a_lo = np.maximum(vlo, v_star - width)
                    a_hi = np.minimum(vhi, v_star + width)
                    search = need & (a_lo < a_hi)
                    if search.any():
                        idx = np.nonzero(search)
                        sub = _subprofile(prof, idx)
                        ys = y[idx]
                        f = lambda vv: self._obj(sub, vv, ys)  # noqa: E731
                        lo_s, hi_s = a_lo[idx], a_hi[idx]
                        v_g = _golden_max(f, lo_s, hi_s)
                        cands = np.stack([v_g, lo_s, hi_s])
                        vals = np.stack([f(c) for c in cands])
                        pick = np.argmax(vals, axis=0)
                        cols = np.arange(len(pick))
                        v = v.copy()
                        val = val.copy()
                        v[idx] = cands[pick, cols]
                        val[idx] = vals[pick, cols]
            better = val > best_val
            best_val = np.where(better, val, best_val)
            best_v = np.where(better, v, best_v)
        u = mY + best_v * root
        return best_val.reshape(shape), best_v.reshape(shape), u.reshape(shape)

    def _obj(self, prof, v, y):
        return _objective(self.kind, self.fp, prof, v, y, self.k)


def _subprofile(prof: RadialProfile, idx) -> RadialProfile:
    return RadialProfile(
        rho=prof.rho[idx], sY=prof.sY[idx], alpha=prof.alpha[idx], t=prof.t[idx],
        d1r=prof.d1r[idx], increment=prof.increment[idx],
    )


def search_box(fp: FieldParams, r1: float, r2: float) -> tuple[float, float, float]:
    """Return ``(rho_lo, rho_hi, y_max)`` for the shell search."""
    mu, d1 = fp.mu, fp.D.d1
    y_max = max(10.0, 2.0 + 4.0 * (1.0 + abs(mu)) / fp.J)
    rho_lo = max(r1, RHO_FLOOR)
    if mu != 0.0:
        peak = math.sqrt(d1) / abs(mu)
        h = lambda r: -(mu**2) * (r * r - peak * peak) / (2.0 * d1) + math.log(r / peak) + 60.0  # noqa: E731
        cap = brentq(h, peak, peak * 100.0)
    else:
        if math.isinf(r2):
            raise HypothesisError("mu = 0 requires a finite outer radius")
        cap = r2
    rho_hi = min(r2, max(cap, 2.0 * rho_lo))
    if not rho_lo < rho_hi:
        raise ValueError("empty radial search interval")
    return rho_lo, rho_hi, y_max


def _local_maxima(values: np.ndarray, n: int) -> list[tuple[int, int]]:
    padded = np.pad(values, 1, constant_values=-INF)
    core = padded[1:-1, 1:-1]
    is_max = np.ones_like(core, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                is_max &= core >= padded[1 + di : padded.shape[0] - 1 + di, 1 + dj : padded.shape[1] - 1 + dj]
    is_max &= np.isfinite(core)
    cand = np.argwhere(is_max)
    order = np.argsort(-core[is_max], kind="stable")
    out = [tuple(int(x) for x in cand[i]) for i in order[:n]]
    if not out and np.isfinite(values).any():
        out = [tuple(int(x) for x in np.unravel_index(np.nanargmax(values), values.shape))]
    return out


def solver_workers() -> int:
    try:
        return max(1, int(os.environ.get("ISOCOMPLEXITY_THREADS", "1")))
    except ValueError:
        return 1


def _grid_eval(prob: _Problem, rhos: np.ndarray, ys: np.ndarray, workers: int | None = None) -> np.ndarray:
    """Objective on the ``rhos x ys`` grid, split into row blocks; blocks are independent, so the result is worker-count invariant."""
    workers = workers or solver_workers()
    blocks = np.array_split(np.arange(len(rhos)), min(workers, len(rhos)))
    run = lambda idx: prob.inner(rhos[idx][:, None], ys[None, :])[0]  # noqa: E731
    if len(blocks) == 1:
        return run(blocks[0])
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return np.concatenate(list(ex.map(run, blocks)), axis=0)


def _solve_shell(prob: _Problem, fixed_y: float | None = None) -> dict:
    """Grid search in (log rho, y) with refinement and a final bounded simplex polish."""
    lr_lo, lr_hi = math.log(prob.rho_lo), math.log(prob.rho_hi)
    y_lo, y_hi = (fixed_y, fixed_y) if fixed_y is not None else (prob.y_lo, prob.y_hi)
    lr = np.linspace(lr_lo, lr_hi, GRID_SIZE)
    ys = np.array([fixed_y]) if fixed_y is not None else np.linspace(y_lo, y_hi, GRID_SIZE)
    vals = _grid_eval(prob, np.exp(lr), ys)
    grid_best = float(np.max(vals))

    def g(p):
        x, yy = (p[0], fixed_y) if fixed_y is not None else (p[0], p[1])
        x = min(max(x, lr_lo), lr_hi)
        yy = min(max(yy, y_lo), y_hi)
        return float(prob.inner(math.exp(x), yy)[0])

    dlr = lr[1] - lr[0]
    dy = (ys[1] - ys[0]) if fixed_y is None else 0.0
    best_p, best_val = None, -INF
    for i, j in _local_maxima(vals, N_STARTS):
        c = np.array([lr[i], ys[j]])
        h = np.array([2.0 * dlr, 2.0 * dy])
        cval = float(vals[i, j])
        for _ in range(REFINE_ROUNDS):
            a_ = np.clip(np.linspace(c[0] - h[0], c[0] + h[0], REFINE_POINTS), lr_lo, lr_hi)
            b_ = np.clip(np.linspace(c[1] - h[1], c[1] + h[1], REFINE_POINTS), y_lo, y_hi)
            sub = prob.inner(np.exp(a_)[:, None], b_[None, :])[0]
            ii, jj = np.unravel_index(np.argmax(sub), sub.shape)
            if sub[ii, jj] >= cval:
                c = np.array([a_[ii], b_[jj]])
                cval = float(sub[ii, jj])
            h = h / CONTRACTION
        x0 = c[:1] if fixed_y is not None else c
        bounds = [(lr_lo, lr_hi)] + ([] if fixed_y is not None else [(y_lo, y_hi)])
        res = minimize(lambda p: -g(p), x0, method="Nelder-Mead", bounds=bounds,
                       options={"xatol": 1e-11, "fatol": 1e-15, "maxiter": 4000,
                                "initial_simplex": _simplex(x0, h * CONTRACTION * 2, bounds)})
        p_val = -float(res.fun)
        p = res.x if p_val >= cval else x0
        p_val = max(p_val, cval)
        if p_val > best_val:
            best_val, best_p = p_val, np.array(p, dtype=float)
    rho0 = float(np.exp(np.clip(best_p[0], lr_lo, lr_hi)))
    y0 = float(fixed_y) if fixed_y is not None else float(np.clip(best_p[1], y_lo, y_hi))
    val, v0, u0 = (float(x) for x in prob.inner(rho0, y0))
    grad = _projected_gradient(g, np.array([math.log(rho0)] + ([] if fixed_y is not None else [y0])),
                               [(lr_lo, lr_hi)] + ([] if fixed_y is not None else [(y_lo, y_hi)]))
    return {"value": val, "rho": rho0, "u": u0, "v": v0, "y": y0, "grid_best": grid_best, "gradient_norm": grad}


def _simplex(x0, h, bounds):
    pts = [np.array(x0, dtype=float)]
    for i in range(len(x0)):
        p = np.array(x0, dtype=float)
        step = h[i] if h[i] > 0 else 1e-3
        lo, hi = bounds[i]
        p[i] = p[i] + step if p[i] + step <= hi else p[i] - step
        p[i] = min(max(p[i], lo), hi)
        pts.append(p)
    return np.array(pts)


def _projected_gradient(g, p, bounds, h=1e-6):
    """Finite-difference gradient with components that push outward at an active bound dropped."""
    grad = []
    for i, (lo, hi) in enumerate(bounds):
        e = np.zeros_like(p)
        e[i] = h
        at_hi, at_lo = p[i] + h > hi, p[i] - h < lo
        if at_hi and at_lo:
            grad.append(0.0)
        elif at_hi:
            d = (g(p) - g(p - e)) / h
            grad.append(min(d, 0.0))
        elif at_lo:
            d = (g(p + e) - g(p)) / h
            grad.append(max(d, 0.0))
        else:
            grad.append((g(p + e) - g(p - e)) / (2 * h))
    return float(np.linalg.norm(grad))


def _boundary_flags(prob: _Problem, sol: dict, r2: float, fixed_y: bool) -> list[str]:
    flags = []
    tol = 1e-9
    if abs(sol["rho"] - prob.rho_lo) <= tol * prob.rho_lo:
        flags.append("rho=lower")
    if abs(sol["rho"] - prob.rho_hi) <= tol * prob.rho_hi:
        flags.append("rho=R2" if prob.rho_hi == r2 else "rho=search-cap")
    if not fixed_y:
        if abs(sol["y"] + SQRT2) <= tol:
            flags.append("y=-sqrt2")
        if abs(sol["y"] - prob.y_lo) <= tol:
            flags.append("y=search-cap")
    for lo, hi in prob.windows:
        if math.isfinite(lo) and abs(sol["u"] - lo) <= 1e-9 * max(1.0, abs(lo)):
            flags.append("u=E-lower")
        if math.isfinite(hi) and abs(sol["u"] - hi) <= 1e-9 * max(1.0, abs(hi)):
            flags.append("u=E-upper")
    return flags


def _shell_constant(fp: FieldParams) -> float:
    return 0.5 * math.log(-4.0 * fp.D.d2) - 0.5 * math.log(fp.D.d1) + 0.5


def solve_complexity(q: ComplexityQuery) -> ComplexityResult:
    """Limit of ``(1/N) log E[number of critical points]`` for the query's mode."""
    if q.mode in TOTAL_MODES:
        return total_complexity(q)
    fp = q.fp
    rho_lo, rho_hi, y_max = search_box(fp, q.r1, q.r2)
    report = check_assumptions(fp.D, rho_hi, 200)
    if not report.holds:
        raise AssumptionError(f"variance margins fail on the search box at rho in {report.failures[:5]}")
    const = _shell_constant(fp)

    def run(kind, fixed_y=None):
        prob = _Problem(kind, fp, q.k or 0, q.energy_window, rho_lo, rho_hi, -y_max, -SQRT2)
        sol = _solve_shell(prob, fixed_y)
        sol["flags"] = _boundary_flags(prob, sol, q.r2, fixed_y is not None)
        return sol

    diag: dict = {"search_box": {"rho": [rho_lo, rho_hi], "y": [-y_max, -SQRT2]}}
    if q.mode == "minima":
        sol, branch = run("minima"), Branch.MINIMA
    elif q.mode == "fixed_index":
        s1, s2 = run("J1"), run("Iplus")
        diag["branch_values"] = {Branch.J1.value: s1["value"] + const, Branch.IPLUS.value: s2["value"] + const}
        sol, branch = (s1, Branch.J1) if s1["value"] >= s2["value"] else (s2, Branch.IPLUS)
    else:
        s_g = quantile_s_gamma(q.gamma)
        sol, branch = run("diverging", fixed_y=s_g), Branch.DIVERGING
        diag["s_gamma"] = s_g
    a_opt = None
    if sol["y"] <= -SQRT2:
        prof = radial_profile(fp.D, sol["rho"])
        a_opt = float(a_coefficient(fp, prof, sol["v"], sol["y"])[1])
    diag.update({
        "a_at_opt": a_opt,
        "gradient_norm": sol["gradient_norm"],
        "boundary_flags": sol["flags"],
        "sup_objective": sol["value"],
        "grid_best": sol["grid_best"] + const,
    })
    return ComplexityResult(value=sol["value"] + const, optimizer=(sol["rho"], sol["u"], sol["y"]),
                            branch=branch.value, diagnostics=diag)


# --- total-count closed forms ------------------------------------------------------


def phi_total(fp: FieldParams, x):
    return -0.5 * np.square(x) - fp.mu * np.asarray(x) / fp.root_neg_d2


def stationary_point(fp: FieldParams, k: int) -> float:
    """Maximizer of ``phi - J_{k+1}``: the stationarity root when ``mu > J``, else the edge."""
    c = fp.mu / fp.root_neg_d2
    if fp.mu <= fp.J:
        return -SQRT2
    if k == 0:
        return -c / 2.0 - 1.0 / c
    return (c - (k + 1) * math.sqrt(c * c + 2.0 * k * (k + 2))) / (k * (k + 2))


def alternative_stationary_point(fp: FieldParams, k: int) -> float:
    """Alternative root formula with ``k(k+2)`` in place of ``2k(k+2)`` under the square root (kept for diagnostics)."""
    d2 = fp.D.d2
    if k == 0:
        return stationary_point(fp, 0)
    return (fp.mu - (k + 1) * math.sqrt(fp.mu**2 - d2 * k * (k + 2))) / (k * (k + 2) * fp.root_neg_d2)


def rate_ik(fp: FieldParams, k: int) -> tuple[float, dict]:
    """``I_k = sup_x [phi(x) - (k+1) J_1(x)]`` with the maximizer and both root formulas in diagnostics."""
    obj = lambda x: float(phi_total(fp, x) - rate_j1(x, k + 1))  # noqa: E731
    x_an = stationary_point(fp, k)
    lo = -max(40.0, 4.0 * abs(fp.mu) / fp.root_neg_d2 + 10.0)
    res = minimize_scalar(lambda x: -obj(x), bounds=(lo, -SQRT2), method="bounded",
                          options={"xatol": 1e-12, "maxiter": 500})
    x_bf = float(res.x)
    candidates = [(obj(x_an), x_an, "stationarity"), (obj(x_bf), x_bf, "brute-force"), (obj(-SQRT2), -SQRT2, "edge")]
    val, x, how = max(candidates, key=lambda c: c[0])
    diag = {"x_k": x, "source": how, "x_k_stationarity": x_an, "x_k_brute_force": x_bf,
            "x_k_alternative_formula": alternative_stationary_point(fp, k)}
    return val, diag


def shell_domain_constant(fp: FieldParams, r1: float, r2: float) -> float:
    """Domain constant of the shell ``{r1 sqrt N < |x| < r2 sqrt N}``.

    For ``mu != 0`` this is the Gaussian rate of ``|mu| |z| / sqrt(N D'(0))`` in
    ``(r1, r2)``; for ``mu = 0`` it is the exponential volume growth of the shell.
    """
    if fp.mu == 0.0:
        if math.isinf(r2):
            raise HypothesisError("volume constant needs a finite outer radius")
        return 0.5 * math.log(2.0 * math.pi) + 0.5 + math.log(r2)
    scale = abs(fp.mu) / math.sqrt(fp.D.d1)
    a1, a2 = scale * r1, scale * r2
    if a1 <= 1.0 <= a2:
        return 0.0
    a = a2 if a2 < 1.0 else a1
    return 0.5 * (a * a - 1.0 - 2.0 * math.log(a))


def total_complexity(q: ComplexityQuery) -> ComplexityResult:
    """Total count over a domain, from the closed forms with the supplied domain constant."""
    if q.mode not in TOTAL_MODES:
        raise ValueError(f"{q.mode} is not a total-count mode")
    if q.domain_constant is None:
        raise ValueError("total-count modes need domain_constant")
    fp = q.fp
    mu, d1, d2, J = fp.mu, fp.D.d1, fp.D.d2, fp.J
    dc = q.domain_constant
    nan = math.nan
    if q.mode == "total_diverging":
        s = quantile_s_gamma(q.gamma)
        if mu != 0.0:
            val = mu**2 / (4 * d2) - math.log(abs(mu) / J) - 0.5 - 0.5 * s * s - mu * s / fp.root_neg_d2 - dc
        else:
            val = math.log(J) - 0.5 - 0.5 * math.log(2 * math.pi) - 0.5 * math.log(d1) - 0.5 * s * s + dc
        return ComplexityResult(val, (nan, nan, s), Branch.DIVERGING.value, {"s_gamma": s})
    k = 0 if q.mode == "total_minima" else int(q.k)
    ik, diag = rate_ik(fp, k)
    if mu != 0.0:
        val = mu**2 / (4 * d2) - math.log(abs(mu) / J) - 0.5 - dc + ik
    else:
        val = math.log(J) - 1.5 - 0.5 * math.log(2 * math.pi) - 0.5 * math.log(d1) + dc
    diag["I_k"] = ik
    branch = Branch.MINIMA if k == 0 else Branch.J1
    return ComplexityResult(val, (nan, nan, diag["x_k"]), branch.value, diag)


# --- closed forms for the energy-unrestricted shell problems ------------------------


def minima_closed_form(fp: FieldParams, r2: float) -> dict:
    """Optimizer and supremum of the minima objective with unrestricted energy and ``R1`` below the optimum."""
    mu, d1, d2, J = fp.mu, fp.D.d1, fp.D.d2, fp.J
    if mu == 0.0:
        rho = r2
        y = -SQRT2
        sup = -1.5 - 0.5 * LOG2 + math.log(r2)
    else:
        peak = math.sqrt(d1) / abs(mu)
        rho = peak if r2 > peak else r2
        y = -(mu / J + J / mu) / SQRT2 if mu > J else -SQRT2
        big = r2 > peak
        if mu <= J and big:
            sup = -2 - 0.5 * LOG2 + SQRT2 * mu / fp.root_neg_d2 + mu**2 / (4 * d2) + math.log(peak)
        elif mu > J and big:
            sup = -0.5 * LOG2 - math.log(J) - 0.5 + 0.5 * math.log(d1)
        elif mu <= J:
            sup = (-1.5 - 0.5 * LOG2 + SQRT2 * mu / fp.root_neg_d2 + mu**2 / (4 * d2)
                   + math.log(r2) - mu**2 * r2**2 / (2 * d1))
        else:
            sup = -0.5 * LOG2 - math.log(J) + math.log(abs(mu)) + math.log(r2) - mu**2 * r2**2 / (2 * d1)
    return {"rho": rho, "y": y, "u": energy_opt(fp, rho, y), "sup": sup, "value": sup + _shell_constant(fp)}


def fixed_index_closed_form_y(fp: FieldParams, k: int) -> float:
    """Spectral shift maximizing the main branch for index ``k`` with unrestricted energy."""
    mu, J = fp.mu, fp.J
    if mu <= J:
        return -SQRT2
    return (SQRT2 * mu - SQRT2 * (k + 1) * math.sqrt(mu**2 + k * (k + 2) * J**2)) / (J * k * (k + 2))


def diverging_closed_form(fp: FieldParams, gamma: float, r2: float) -> dict:
    mu, d1 = fp.mu, fp.D.d1
    s = quantile_s_gamma(gamma)
    if mu != 0.0:
        peak = math.sqrt(d1) / abs(mu)
        rho = peak if r2 > peak else r2
    else:
        rho = r2
    sup = float(psi_star_reduced(fp, rho, s))
    return {"rho": rho, "y": s, "u": energy_opt(fp, rho, s), "sup": sup, "value": sup + _shell_constant(fp)}
