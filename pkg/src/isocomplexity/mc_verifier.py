"""Desk-scale Monte Carlo checks of the random-matrix limits behind the complexity formulas.

Sampling is split into fixed-size chunks. Chunk ``c`` of a run with seed ``s`` draws
from a Philox stream keyed by ``(s, c)``, so results are bit-identical for any
number of worker threads.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal
from scipy.special import logsumexp

from .complexity import rate_ik
from .rate_functions import TruncatedResolvent, f_eval, lambda_star, lambda_transform
from .semicircle import SQRT2, semicircle_cdf, stieltjes_m
from .structure_function import FieldParams, geometry_coeffs

CHUNK = 250
THREADS_ENV = "ISOCOMPLEXITY_THREADS"
DENSE_LIMIT = 160
SINGULAR_TOL = 1e-12
TAIL_FLOOR = 1e-5


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, chunk], dtype=np.uint64)))


def _chunked(draw: Callable[[np.random.Generator, int], np.ndarray], n_samples: int, seed: int,
             workers: int | None = None) -> np.ndarray:
    """Run ``draw(rng, size)`` over fixed chunks and concatenate in chunk order."""
    sizes = [min(CHUNK, n_samples - start) for start in range(0, n_samples, CHUNK)]
    jobs = list(enumerate(sizes))
    workers = workers or default_workers()
    if workers == 1 or len(jobs) == 1:
        parts = [draw(chunk_rng(seed, c), size) for c, size in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda job: draw(chunk_rng(seed, job[0]), job[1]), jobs))
    return np.concatenate(parts)


# --- GOE ----------------------------------------------------------------------------


@dataclass(frozen=True)
class GOESample:
    n: int
    matrix: np.ndarray
    eigenvalues: np.ndarray


def goe_matrix(n: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Symmetric Gaussian matrix with ``E M_ij^2 = (1 + delta_ij)/(2n)``."""
    shape = (n, n) if size is None else (size, n, n)
    a = rng.standard_normal(shape) / math.sqrt(n)
    return (a + np.swapaxes(a, -1, -2)) / 2.0


def sample_goe(n: int, seed: int) -> GOESample:
    if n < 1:
        raise ValueError("n must be at least 1")
    m = goe_matrix(n, chunk_rng(seed, 0))
    return GOESample(n=n, matrix=m, eigenvalues=np.linalg.eigvalsh(m))


def goe_eigenvalues(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Sorted eigenvalues of ``size`` independent GOE(n) matrices, shape ``(size, n)``.

    Uses the tridiagonal model with ``N(0, 2)`` diagonal and ``chi_{n-1}, ..., chi_1``
    off-diagonal scaled by ``1/sqrt(2n)``, which has the same eigenvalue law.
    """
    diag = rng.normal(0.0, math.sqrt(2.0), size=(size, n))
    off = np.sqrt(rng.chisquare(np.arange(n - 1, 0, -1), size=(size, n - 1))) if n > 1 else np.zeros((size, 0))
    scale = 1.0 / math.sqrt(2.0 * n)
    diag, off = diag * scale, off * scale
    if n <= DENSE_LIMIT:
        t = np.zeros((size, n, n))
        i = np.arange(n)
        t[:, i, i] = diag
        t[:, i[:-1], i[1:]] = off
        t[:, i[1:], i[:-1]] = off
        return np.linalg.eigvalsh(t)
    return np.stack([eigvalsh_tridiagonal(diag[j], off[j]) for j in range(size)])


def kolmogorov_distance(eigenvalues: np.ndarray) -> float:
    ev = np.sort(eigenvalues)
    n = len(ev)
    cdf = semicircle_cdf(ev)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


# --- conditional Hessian ----------------------------------------------------------------


@dataclass(frozen=True)
class HessianSample:
    n: int
    g: np.ndarray
    z1p: float
    z3p: float
    xi: np.ndarray
    zeta: float
    resamples: int = 0

    @property
    def minor(self) -> np.ndarray:
        return self.g[1:, 1:]


def _hessian_scales(fp: FieldParams, n: int, rho: float, u: float):
    gc = geometry_coeffs(fp, rho, u)
    return gc, math.sqrt(gc.n_sigma1_sq / n), math.sqrt(gc.n_sigma2_sq / n), math.sqrt(gc.alpha * gc.t) * rho / math.sqrt(n)


def sample_conditional_hessian(fp: FieldParams, n: int, rho: float, u: float, seed: int,
                               rng: np.random.Generator | None = None) -> HessianSample:
    """Hessian at a critical point of radius ``rho`` and energy ``u``, in coordinates with the point on the first axis."""
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = rng or chunk_rng(seed, 0)
    gc, s1, s2, s3 = _hessian_scales(fp, n, rho, u)
    scale = math.sqrt(-4.0 * fp.D.d2)
    resamples = 0
    while True:
        z1, z2, z3 = rng.standard_normal(3)
        xi = rng.standard_normal(n - 1) * math.sqrt(-2.0 * fp.D.d2 / n)
        goe = goe_matrix(n - 1, rng)
        z1p = s1 * z1 - s2 * z2 + gc.m1
        z3p = (s2 * z2 + s3 * z3 - gc.m2) / scale
        minor = scale * (math.sqrt((n - 1) / n) * goe - z3p * np.eye(n - 1))
        if np.min(np.abs(np.linalg.eigvalsh(minor))) > SINGULAR_TOL:
            break
        resamples += 1
    g = np.empty((n, n))
    g[0, 0] = z1p
    g[0, 1:] = g[1:, 0] = xi
    g[1:, 1:] = minor
    zeta = z1p - xi @ np.linalg.solve(minor, xi)
    return HessianSample(n=n, g=g, z1p=float(z1p), z3p=float(z3p), xi=xi, zeta=float(zeta), resamples=resamples)


def _upper_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i, n)]


def conditioned_hessian_law(fp: FieldParams, n: int, rho: float, u: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the upper-triangular Hessian entries given ``grad H = 0`` and ``H = n u``.

    Built from the joint covariances of the field, its gradient and Hessian at
    ``x = rho sqrt(n) e_1`` and conditioned by plain Gaussian linear algebra.
    """
    D, mu = fp.D, fp.mu
    r = rho * rho
    Dr, d1r, d2r, _, _ = (float(v) for v in D.eval(r))
    d1, d2 = D.d1, D.d2
    x = np.zeros(n)
    x[0] = rho * math.sqrt(n)
    pairs = _upper_pairs(n)
    m = len(pairs)
    dim = 1 + n + m
    cov = np.zeros((dim, dim))
    mean = np.zeros(dim)
    mean[0] = mu * x @ x / 2.0
    mean[1 : 1 + n] = mu * x
    cov[0, 0] = n * Dr
    cov[0, 1 : 1 + n] = cov[1 : 1 + n, 0] = d1r * x
    cov[1 : 1 + n, 1 : 1 + n] = d1 * np.eye(n)
    for a, (i, j) in enumerate(pairs):
        mean[1 + n + a] = mu * (i == j)
        c = 2.0 * d2r * x[i] * x[j] / n + (d1r - d1) * (i == j)
        cov[0, 1 + n + a] = cov[1 + n + a, 0] = c
        for b, (k, l) in enumerate(pairs):
            cov[1 + n + a, 1 + n + b] = -2.0 * d2 * ((j == l) * (i == k) + (i == l) * (k == j) + (k == l) * (i == j)) / n
    obs = slice(0, 1 + n)
    hid = slice(1 + n, dim)
    gain = np.linalg.solve(cov[obs, obs], cov[obs, hid]).T
    observed = np.zeros(1 + n)
    observed[0] = n * u
    cmean = mean[hid] + gain @ (observed - mean[obs])
    ccov = cov[hid, hid] - gain @ cov[obs, hid]
    return cmean, ccov


def coefficient_hessian_law(fp: FieldParams, n: int, rho: float, u: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the same entries implied by the block sampler's coefficients."""
    gc, s1, s2, s3 = _hessian_scales(fp, n, rho, u)
    d2 = fp.D.d2
    pairs = _upper_pairs(n)
    shift_var = s2**2 + s3**2
    mean = np.array([gc.m1 if (i, j) == (0, 0) else (gc.m2 if i == j else 0.0) for i, j in pairs])
    cov = np.zeros((len(pairs), len(pairs)))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            if i == j and k == l:
                if i == 0 and k == 0:
                    cov[a, b] = s1**2 + s2**2
                elif i == 0 or k == 0:
                    cov[a, b] = s2**2
                else:
                    cov[a, b] = shift_var + (-4.0 * d2 / n if i == k else 0.0)
            elif (i, j) == (k, l):
                cov[a, b] = -2.0 * d2 / n
    return mean, cov


def conditioned_coefficients(fp: FieldParams, n: int, rho: float, u: float) -> dict[str, float]:
    """Read ``m1, m2, N sigma_1^2, N sigma_2^2, b^2`` off the conditioned law (needs ``n >= 3``)."""
    if n < 3:
        raise ValueError("n must be at least 3")
    mean, cov = conditioned_hessian_law(fp, n, rho, u)
    pairs = _upper_pairs(n)
    i11, i22, i33 = pairs.index((0, 0)), pairs.index((1, 1)), pairs.index((2, 2))
    var11, c12, c23 = cov[i11, i11], cov[i11, i22], cov[i22, i33]
    return {
        "m1": mean[i11],
        "m2": mean[i22],
        "n_sigma1_sq": n * (var11 - c12),
        "n_sigma2_sq": n * c12,
        "b_sq": n * (var11 - c12**2 / c23),
    }


def morse_index(m: np.ndarray) -> int:
    return int(np.sum(np.linalg.eigvalsh(m) < 0))


@dataclass(frozen=True)
class BlockCheck:
    n_samples: int
    index_violations: int
    max_schur_error: float
    max_interlace_violation: float
    resamples: int


def check_block_identities(fp: FieldParams, n: int, rho: float, u: float, n_samples: int, seed: int) -> BlockCheck:
    """Index splitting through the Schur complement, the determinant identity, and eigenvalue interlacing."""
    rng = chunk_rng(seed, 0)
    bad = 0
    schur = 0.0
    inter = 0.0
    resamples = 0
    for _ in range(n_samples):
        h = sample_conditional_hessian(fp, n, rho, u, seed, rng=rng)
        resamples += h.resamples
        ev_g = np.linalg.eigvalsh(h.g)
        ev_m = np.linalg.eigvalsh(h.minor)
        k = int(np.sum(ev_g < 0))
        k_minor = int(np.sum(ev_m < 0))
        ok = (k_minor == k and h.zeta > 0) or (k_minor == k - 1 and h.zeta < 0)
        bad += not ok
        sign_g, logdet_g = np.linalg.slogdet(h.g)
        sign_m, logdet_m = np.linalg.slogdet(h.minor)
        pred = sign_m * math.copysign(1.0, h.zeta) * math.exp(logdet_m + math.log(abs(h.zeta)) - logdet_g)
        schur = max(schur, abs(sign_g - pred))
        scale = max(1.0, float(np.max(np.abs(ev_g))))
        gap_lo = np.max(ev_g[:-1] - ev_m) / scale
        gap_hi = np.max(ev_m - ev_g[1:]) / scale
        inter = max(inter, float(gap_lo), float(gap_hi))
    return BlockCheck(n_samples, bad, schur, max(inter, 0.0), resamples)


# --- estimators -------------------------------------------------------------------------


@dataclass
class EstimatorReport:
    name: str
    estimate: float
    stderr: float
    n_samples: int
    n_dim: int
    target: float
    seed: int
    extra: dict = field(default_factory=dict)

    @property
    def error(self) -> float:
        return self.estimate - self.target

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EstimatorReport":
        return cls(**json.loads(text))


def _median_stderr(x: np.ndarray) -> float:
    """Half the spread of the order statistics bracketing the median at one binomial standard deviation."""
    xs = np.sort(x)
    n = len(xs)
    half = 0.5 * math.sqrt(n)
    lo = int(max(0, math.floor(n / 2 - half)))
    hi = int(min(n - 1, math.ceil(n / 2 + half)))
    return float((xs[hi] - xs[lo]) / 2.0)


def _log_mean_exp(s: np.ndarray) -> tuple[float, float]:
    """``log mean exp(s)`` and the delta-method standard error of that log."""
    lme = float(logsumexp(s) - math.log(len(s)))
    w = np.exp(s - s.max())
    rel = float(np.std(w, ddof=1) / (np.mean(w) * math.sqrt(len(s)))) if len(s) > 1 else math.inf
    return lme, rel


def estimate_q(fp: FieldParams, n: int, y: float, n_samples: int, seed: int, workers: int | None = None) -> EstimatorReport:
    """Median of the quadratic form ``(sqrt(-D''(0))/n) sum Z_i^2 / (sqrt((n-1)/n) lambda_i - y)``.

    The mean of this form is infinite at finite ``n``, so the median is reported.
    """
    if not y < -SQRT2:
        raise ValueError("need y < -sqrt(2)")
    c = fp.root_neg_d2
    shrink = math.sqrt((n - 1) / n)

    def draw(rng, size):
        lam = goe_eigenvalues(n - 1, size, rng)
        z2 = rng.standard_normal((size, n - 1)) ** 2
        return c / n * np.sum(z2 / (shrink * lam - y), axis=1)

    q = _chunked(draw, n_samples, seed, workers)
    return EstimatorReport("q_median", float(np.median(q)), _median_stderr(q), n_samples, n, c * stieltjes_m(y), seed)


def estimate_lambda(n: int, y: float, delta: float, t: float, ell: int, n_samples: int, seed: int,
                    workers: int | None = None) -> EstimatorReport:
    """Finite-``n`` log-moment transform of the truncated resolvent, quadratic weights integrated out."""
    tr = TruncatedResolvent(y, delta)
    if t < -delta / 2.0:
        raise ValueError("t below -delta/2")
    if not 1 <= ell <= n - 1:
        raise ValueError("ell must lie in [1, n-1]")
    target = float(lambda_transform(y, t, delta))
    if t == 0.0:
        return EstimatorReport("lambda_transform", 0.0, 0.0, n_samples, n, target, seed)

    def draw(rng, size):
        lam = goe_eigenvalues(n - 1, size, rng)[:, ell - 1 :]
        return -0.5 * np.sum(np.log1p(2.0 * t * f_eval(tr, lam)), axis=1)

    s = _chunked(draw, n_samples, seed, workers)
    lme, rel = _log_mean_exp(s)
    est = n * t / (n - 1) * stieltjes_m(y) + lme / (n - 1)
    return EstimatorReport("lambda_transform", est, rel / (n - 1), n_samples, n, target, seed)


def estimate_ik(fp: FieldParams, n: int, k: int, n_samples: int, seed: int, workers: int | None = None) -> EstimatorReport:
    """``(1/n) log E exp((n+1) phi(lambda_{k+1}))`` over GOE(n+1), against ``I_k``."""
    if k < 0 or n < k + 2:
        raise ValueError("need k >= 0 and n >= k + 2")
    c = fp.root_neg_d2

    def draw(rng, size):
        lam = goe_eigenvalues(n + 1, size, rng)[:, k]
        return (n + 1) * (-0.5 * lam * lam - fp.mu * lam / c)

    s = _chunked(draw, n_samples, seed, workers)
    lme, rel = _log_mean_exp(s)
    return EstimatorReport("rate_ik", lme / n, rel / n, n_samples, n, rate_ik(fp, k)[0], seed, {"k": k, "mu": fp.mu})


def estimate_tail(n: int, y: float, delta: float, s: float, ell: int, n_samples: int, seed: int,
                  workers: int | None = None) -> EstimatorReport:
    """``(1/n) log P(m(y) - (1/n) sum f(lambda_i) Z_i^2 >= s)`` by direct counting."""
    my = stieltjes_m(y)
    if not 0.0 <= s < my:
        raise ValueError("need 0 <= s < m(y)")
    tr = TruncatedResolvent(y, delta)
    rate = float(lambda_star(y, s, delta))
    predicted = math.exp(-n * rate)
    if predicted < TAIL_FLOOR:
        raise ValueError(f"predicted probability {predicted:.3g} is below {TAIL_FLOOR}; counting cannot resolve it")

    def draw(rng, size):
        lam = goe_eigenvalues(n - 1, size, rng)[:, ell - 1 :]
        z2 = rng.standard_normal(lam.shape) ** 2
        return (my - np.sum(f_eval(tr, lam) * z2, axis=1) / n >= s).astype(float)

    hits = _chunked(draw, n_samples, seed, workers)
    p = float(hits.mean())
    if p == 0.0:
        raise RuntimeError("no tail events observed; increase n_samples")
    stderr = math.sqrt((1.0 - p) / (p * n_samples)) / n
    return EstimatorReport("tail_rate", math.log(p) / n, stderr, n_samples, n, -rate, seed, {"hits": int(hits.sum())})


def eigenvalue_identity(n: int, k: int, n_samples: int, seed: int, workers: int | None = None) -> EstimatorReport:
    """Sample mean of ``lambda_k - (1/n) sum_{i != k} 1/(lambda_k - lambda_i)``; its expectation is 0."""

    def draw(rng, size):
        lam = np.linalg.eigvalsh(goe_matrix(n, rng, size))
        lk = lam[:, k - 1 : k]
        others = np.delete(lam, k - 1, axis=1)
        return lk[:, 0] - np.sum(1.0 / (lk - others), axis=1) / n

    d = _chunked(draw, n_samples, seed, workers)
    return EstimatorReport("eigenvalue_identity", float(d.mean()), float(d.std(ddof=1) / math.sqrt(len(d))),
                           n_samples, n, 0.0, seed, {"k": k})


def goe_second_moments(n: int, n_samples: int, seed: int) -> dict[str, tuple[float, float]]:
    """Sample second moments (and standard errors) of a diagonal and an off-diagonal entry."""
    m = _chunked(lambda rng, size: goe_matrix(n, rng, size)[:, :2, :2].reshape(size, 4), n_samples, seed)
    out = {}
    for name, col in (("diag", 0), ("offdiag", 1)):
        sq = m[:, col] ** 2
        out[name] = (float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(len(sq))))
    return out


# --- verification suite -------------------------------------------------------------------


@dataclass
class CheckOutcome:
    name: str
    passed: bool
    tolerance: str
    detail: dict
    seconds: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=float)


def _verify_goe_moments(fp, seed, n_samples=None, **_):
    n = 10
    mom = goe_second_moments(n, n_samples or 10_000, seed)
    (d, sd), (o, so) = mom["diag"], mom["offdiag"]
    ok = abs(d - 1 / n) <= 4 * sd and abs(o - 1 / (2 * n)) <= 4 * so
    return ok, "4 stderr", {"diag": d, "offdiag": o, "diag_stderr": sd, "offdiag_stderr": so}


def _verify_semicircle(fp, seed, **_):
    dist = kolmogorov_distance(sample_goe(500, seed).eigenvalues)
    return dist < 0.05, "KS < 0.05", {"ks": dist}


def _verify_hessian_law(fp, seed, **_):
    rho, u = 0.8, -0.3
    got = conditioned_coefficients(fp, 5, rho, u)
    gc = geometry_coeffs(fp, rho, u)
    err = max(abs(got[k] - getattr(gc, k)) for k in got)
    m_a, c_a = conditioned_hessian_law(fp, 5, rho, u)
    m_b, c_b = coefficient_hessian_law(fp, 5, rho, u)
    err = max(err, float(np.max(np.abs(m_a - m_b))), float(np.max(np.abs(c_a - c_b))))
    return err < 1e-10, "1e-10", {"max_abs_error": err}


def _verify_block(fp, seed, n_samples=None, **_):
    res = check_block_identities(fp, 20, 0.8, -0.3, n_samples or 1000, seed)
    ok = res.index_violations == 0 and res.max_schur_error < 1e-8 and res.max_interlace_violation < 1e-9
    return ok, "0 violations, Schur 1e-8, interlace 1e-9", asdict(res)


def _verify_eigen_identity(fp, seed, n_samples=None, **_):
    r = eigenvalue_identity(10, 1, n_samples or 100_000, seed)
    return abs(r.estimate) <= 4 * r.stderr, "4 stderr", asdict(r)


def _verify_q(fp, seed, n_samples=None, **_):
    reps = [estimate_q(fp, n, -2.0, n_samples or 200, seed) for n in (100, 1000)]
    rel = abs(reps[1].error) / abs(reps[1].target)
    ok = rel < 0.05 and abs(reps[1].error) <= abs(reps[0].error)
    return ok, "5% at n=1000, shrinking from n=100", {"relative_error": rel, "errors": [r.error for r in reps]}


def _verify_lambda(fp, seed, n_samples=None, **_):
    y = -2.0
    r = estimate_lambda(400, y, -SQRT2 - y, 0.3, 1, n_samples or 1000, seed)
    return abs(r.error) < 0.02, "0.02", asdict(r)


def _verify_ik(fp, seed, n_samples=None, n_dims=None, **_):
    zero = FieldParams(fp.D, 0.0)
    dims = sorted(n_dims or (20, 40, 60, 80))
    reps = {n: estimate_ik(zero, n, 0, n_samples or 10_000, seed) for n in dims}
    errs = [abs(reps[n].error) for n in dims if n != 60]
    ok = all(a >= b for a, b in zip(errs, errs[1:]))
    if 60 in reps:
        ok = ok and abs(reps[60].error) < 0.15
    return ok, "0.15 at n=60, non-increasing in n", {"estimates": {n: r.estimate for n, r in reps.items()}}


def _verify_tail(fp, seed, n_samples=None, **_):
    y = -2.0
    r = estimate_tail(200, y, -SQRT2 - y, 0.0, 1, n_samples or 2000, seed)
    return abs(r.estimate) < 0.05, "|rate| < 0.05 at s=0", asdict(r)


VERIFY_CHECKS: dict[str, Callable] = {
    "goe_moments": _verify_goe_moments,
    "semicircle": _verify_semicircle,
    "hessian_law": _verify_hessian_law,
    "block_identities": _verify_block,
    "eigenvalue_identity": _verify_eigen_identity,
    "q_limit": _verify_q,
    "lambda_limit": _verify_lambda,
    "ik_limit": _verify_ik,
    "tail_zero": _verify_tail,
}


def run_verify(fp: FieldParams, checks: list[str] | None = None, seed: int = 0,
               n_samples: int | None = None, n_dims: list[int] | None = None) -> list[CheckOutcome]:
    names = list(VERIFY_CHECKS) if not checks else checks
    out = []
    for name in names:
        if name not in VERIFY_CHECKS:
            raise ValueError(f"unknown check {name!r}; known: {sorted(VERIFY_CHECKS)}")
        start = time.perf_counter()
        ok, tol, detail = VERIFY_CHECKS[name](fp, seed, n_samples=n_samples, n_dims=n_dims)
        out.append(CheckOutcome(name, bool(ok), tol, detail, time.perf_counter() - start))
    return out
