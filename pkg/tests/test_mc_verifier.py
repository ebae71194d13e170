import json
import math

import numpy as np
import pytest

from isocomplexity.mc_verifier import (
    EstimatorReport,
    chunk_rng,
    check_block_identities,
    coefficient_hessian_law,
    conditioned_hessian_law,
    eigenvalue_identity,
    estimate_ik,
    estimate_lambda,
    estimate_q,
    estimate_tail,
    goe_eigenvalues,
    goe_matrix,
    goe_second_moments,
    kolmogorov_distance,
    morse_index,
    run_verify,
    sample_conditional_hessian,
    sample_goe,
)
from isocomplexity.semicircle import SQRT2
from isocomplexity.structure_function import FieldParams, make_builtin


def _fp(mu):
    return FieldParams(make_builtin("log-correlator"), mu)


def test_goe_second_moments():
    n = 10
    mom = goe_second_moments(n, 10_000, seed=11)
    (d, sd), (o, so) = mom["diag"], mom["offdiag"]
    assert abs(d - 1 / n) <= 4 * sd
    assert abs(o - 1 / (2 * n)) <= 4 * so


def test_semicircle_fit():
    assert kolmogorov_distance(sample_goe(400, 5).eigenvalues) < 0.05


def test_tridiagonal_model_matches_dense():
    rng_a, rng_b = chunk_rng(1, 0), chunk_rng(2, 0)
    tri = goe_eigenvalues(12, 4000, rng_a)
    dense = np.linalg.eigvalsh(goe_matrix(12, rng_b, 4000))
    for col in (0, 6, 11):
        a, b = tri[:, col], dense[:, col]
        se = math.sqrt(a.var() / len(a) + b.var() / len(b))
        assert abs(a.mean() - b.mean()) < 4 * se
    assert np.all(np.diff(tri, axis=1) >= 0)
    big = goe_eigenvalues(200, 2, rng_a)
    assert big.shape == (2, 200)


def test_chunked_streams_are_worker_invariant():
    a = estimate_lambda(30, -2.0, -SQRT2 + 2.0, 0.3, 1, 700, seed=4, workers=1)
    b = estimate_lambda(30, -2.0, -SQRT2 + 2.0, 0.3, 1, 700, seed=4, workers=3)
    assert a == b
    c = estimate_ik(_fp(0.0), 12, 0, 600, seed=9, workers=1)
    d = estimate_ik(_fp(0.0), 12, 0, 600, seed=9, workers=2)
    assert c.to_json() == d.to_json()
    assert estimate_lambda(30, -2.0, -SQRT2 + 2.0, 0.3, 1, 700, seed=5).estimate != a.estimate


def test_conditioned_law_matches_coefficients():
    fp = _fp(1.0)
    for rho, u in [(0.5, 0.0), (1.3, -0.7)]:
        m_a, c_a = conditioned_hessian_law(fp, 4, rho, u)
        m_b, c_b = coefficient_hessian_law(fp, 4, rho, u)
        np.testing.assert_allclose(m_a, m_b, atol=1e-10)
        np.testing.assert_allclose(c_a, c_b, atol=1e-10)


def test_block_identities():
    res = check_block_identities(_fp(1.0), 20, 0.8, -0.3, 300, seed=2)
    assert res.index_violations == 0
    assert res.max_schur_error < 1e-8
    assert res.max_interlace_violation < 1e-9


def test_hessian_sample_structure():
    h = sample_conditional_hessian(_fp(0.5), 8, 0.6, 0.1, seed=3)
    np.testing.assert_array_equal(h.g, h.g.T)
    assert h.minor.shape == (7, 7)
    assert h.zeta == pytest.approx(h.z1p - h.xi @ np.linalg.solve(h.minor, h.xi))
    assert morse_index(np.diag([-1.0, 2.0, -3.0])) == 2


def test_eigenvalue_identity_small():
    r = eigenvalue_identity(6, 2, 20_000, seed=8)
    assert abs(r.estimate) <= 4 * r.stderr


def test_q_median_converges():
    r = estimate_q(_fp(1.0), 400, -2.0, 200, seed=1)
    assert abs(r.error) / r.target < 0.05


def test_tail_refusal_and_zero():
    with pytest.raises(ValueError, match="below"):
        estimate_tail(200, -2.0, -SQRT2 + 2.0, 0.3, 1, 100, seed=0)
    r = estimate_tail(100, -2.0, -SQRT2 + 2.0, 0.0, 1, 500, seed=0)
    assert abs(r.estimate) < 0.05


def test_report_json_round_trip():
    r = estimate_lambda(20, -2.0, -SQRT2 + 2.0, -0.1, 1, 300, seed=6)
    back = EstimatorReport.from_json(r.to_json())
    assert back == r
    assert json.loads(r.to_json())["name"] == "lambda_transform"


def test_estimator_argument_checks():
    with pytest.raises(ValueError):
        estimate_lambda(20, -2.0, 0.5, -0.5, 1, 10, seed=0)
    with pytest.raises(ValueError):
        estimate_ik(_fp(0.0), 3, 5, 10, seed=0)
    with pytest.raises(ValueError):
        estimate_q(_fp(0.0), 10, -1.0, 10, seed=0)


def test_run_verify_subset():
    out = run_verify(_fp(1.0), checks=["goe_moments", "hessian_law", "semicircle"], seed=1)
    assert [o.name for o in out] == ["goe_moments", "hessian_law", "semicircle"]
    assert all(o.passed for o in out)
    rec = json.loads(out[1].to_json())
    assert rec["passed"] is True and rec["detail"]["max_abs_error"] < 1e-10
    with pytest.raises(ValueError):
        run_verify(_fp(1.0), checks=["nope"])
