import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import gammaln

from volatility import classic_bekk as cb
from volatility import classic_garch as cg
from volatility import linalg
from volatility.classic_bekk import BekkParams
from volatility.errors import DegreesOfFreedomTooSmall, InvalidParams, NotPositiveDefinite, SeriesTooShort


def _random_params(rng, n, nu=None):
    C = np.triu(rng.uniform(-0.5, 0.5, (n, n)))
    C[np.diag_indices(n)] = rng.uniform(0.05, 1.0, n)
    b = rng.uniform(0.0, 0.97, n)
    a = rng.uniform(0.0, np.sqrt(np.maximum(0.999 - b**2, 0.0)))
    return BekkParams(C=C, a_diag=a, b_diag=b, nu=nu)


def test_identity_intercept_only(rng):
    params = BekkParams(C=np.eye(2), a_diag=np.zeros(2), b_diag=np.zeros(2))
    sigmas = cb.bekk_filter(params, rng.standard_normal((5, 2)), np.eye(2))
    assert_allclose(sigmas, np.broadcast_to(np.eye(2), (5, 2, 2)))


def test_two_asset_arch_term():
    a1, a2 = 0.3, 0.5
    params = BekkParams(C=np.eye(2), a_diag=np.array([a1, a2]), b_diag=np.zeros(2))
    sigmas = cb.bekk_filter(params, np.array([[1.0, 1.0], [0.0, 0.0]]), np.eye(2))
    assert_allclose(sigmas[0], np.eye(2))
    assert_allclose(sigmas[1], np.eye(2) + np.array([[a1**2, a1 * a2], [a1 * a2, a2**2]]))


def test_filter_matches_matrix_recursion(rng):
    params = _random_params(rng, 3)
    R = rng.standard_normal((30, 3))
    A, B = np.diag(params.a_diag), np.diag(params.b_diag)
    sigma, prev_r = np.eye(3) * 2.0, np.zeros(3)
    for t, S in enumerate(cb.bekk_filter(params, R, np.eye(3) * 2.0)):
        sigma = params.C.T @ params.C + A.T @ np.outer(prev_r, prev_r) @ A + B.T @ sigma @ B
        assert_allclose(S, sigma, rtol=1e-10, atol=1e-12)
        prev_r = R[t]


def test_invalid_bekk_params():
    with pytest.raises(InvalidParams):
        BekkParams(C=np.diag([-1.0, 1.0]), a_diag=np.zeros(2), b_diag=np.zeros(2)).validate()
    with pytest.raises(InvalidParams):
        BekkParams(C=np.ones((2, 2)), a_diag=np.zeros(2), b_diag=np.zeros(2)).validate()
    with pytest.raises(DegreesOfFreedomTooSmall):
        BekkParams(C=np.eye(1), a_diag=np.zeros(1), b_diag=np.zeros(1), nu=1.5).validate()


def test_parameter_count():
    p = BekkParams(C=np.eye(3), a_diag=np.zeros(3), b_diag=np.zeros(3), nu=5.0)
    assert p.n_params == 2 * 3 + 6 + 1


def test_one_asset_equals_garch(rng):
    c, a, b = 0.3, 0.4, 0.9
    r = rng.standard_normal(200)
    params = BekkParams(C=np.array([[c]]), a_diag=np.array([a]), b_diag=np.array([b]))
    bekk = cb.bekk_filter(params, r[:, None], np.array([[1.3]]))[:, 0, 0]
    garch = cg.garch_filter(cg.GarchParams(c**2, a**2, b**2), r, 1.3)
    assert np.max(np.abs(bekk - garch)) < 1e-12


def test_structural_psd_random_trials():
    rng = np.random.default_rng(99)
    for trial in range(1000):
        n = 2 + trial % 2
        params = _random_params(rng, n)
        R = rng.standard_normal((15, n)) * rng.uniform(0.1, 5.0)
        B0 = rng.standard_normal((n, n))
        sigmas = cb.bekk_filter(params, R, B0.T @ B0 + 0.1 * np.eye(n))
        assert np.max(np.abs(sigmas - np.swapaxes(sigmas, 1, 2))) == 0.0
        for S in sigmas:
            linalg.cholesky(S)
            assert np.min(np.linalg.eigvalsh(S)) > -1e-12


def test_mvn_examples():
    assert_allclose(cb.loglik_mvn(np.eye(2)[None], np.zeros((1, 2))), -np.log(2.0 * np.pi))
    assert_allclose(
        cb.loglik_mvn(np.diag([1.0, 4.0])[None], np.array([[1.0, 2.0]])),
        -np.log(2.0 * np.pi) - 0.5 * np.log(4.0) - 1.0,
    )


def test_mvn_reports_offending_index():
    sigmas = np.stack([np.eye(2), np.array([[1.0, 3.0], [3.0, 1.0]])])
    with pytest.raises(NotPositiveDefinite) as info:
        cb.loglik_mvn(sigmas, np.zeros((2, 2)))
    assert info.value.index == 1


def test_mvt_examples(rng):
    expected = gammaln(3.0) - gammaln(2.0) - np.log(2.0 * np.pi)
    assert_allclose(cb.loglik_mvt(np.eye(2)[None], np.zeros((1, 2)), 4.0), expected)
    with pytest.raises(DegreesOfFreedomTooSmall):
        cb.loglik_mvt(np.eye(2)[None], np.zeros((1, 2)), 2.0)

    sigma_sq = rng.uniform(0.5, 2.0, 50)
    r = rng.standard_normal(50)
    assert_allclose(
        cb.loglik_mvt(sigma_sq[:, None, None], r[:, None], 6.0),
        cg.loglik_student_t(sigma_sq, r, 6.0),
        rtol=1e-12,
    )


def test_mvt_normal_limit(rng):
    B = rng.standard_normal((40, 3, 3))
    sigmas = np.einsum("tij,tik->tjk", B, B) + np.eye(3)
    R = rng.standard_normal((40, 3))
    gap = cb.loglik_mvt_terms(sigmas, R, 1e6) - cb.loglik_mvn_terms(sigmas, R)
    assert np.max(np.abs(gap)) < 1e-3


def test_vector_round_trip():
    p = BekkParams(
        C=np.array([[0.5, 0.1, -0.2], [0.0, 0.4, 0.3], [0.0, 0.0, 0.6]]),
        a_diag=np.array([0.3, 0.2, 0.25]),
        b_diag=np.array([0.9, 0.95, 0.8]),
        nu=7.0,
    )
    q = cb.params_from_vector(cb.params_to_vector(p), 3, with_nu=True)
    assert_allclose(q.C, p.C, atol=1e-12)
    assert_allclose(q.a_diag, p.a_diag, atol=1e-8)
    assert_allclose(q.b_diag, p.b_diag, atol=1e-8)
    assert_allclose(q.nu, 7.0)


def test_fit_rejects_short_series(rng):
    with pytest.raises(SeriesTooShort):
        cb.fit_mle("normal", rng.standard_normal((100, 5)))


def test_fit_small_sample_beats_baseline():
    truth = BekkParams(C=np.array([[0.2, 0.05], [0.0, 0.2]]), a_diag=np.array([0.3, 0.25]), b_diag=np.array([0.9, 0.92]))
    R, _ = cb.simulate_bekk(truth, 600, np.random.default_rng(4))
    fit = cb.fit_mle("normal", R, n_starts=5, seed=0, log_level="WARNING")
    baseline = cb.baseline_params(fit.sigma0, with_nu=False)
    baseline_ll = cb.loglik_mvn(cb.bekk_filter(baseline, R, fit.sigma0), R)
    assert fit.loglik >= baseline_ll - 1e-8
    assert np.all(np.diag(fit.params.C) > 0)
    assert fit.params.nu is None


def test_heldout_loglik_sums_range(rng):
    params = _random_params(rng, 2)
    R = rng.standard_normal((60, 2))
    sigmas = cb.bekk_filter(params, R, np.eye(2))
    assert_allclose(cb.heldout_loglik(params, R, np.eye(2), (40, 60)), cb.loglik_mvn(sigmas[40:], R[40:]))


def test_simulate_student_t_shapes(rng):
    params = _random_params(rng, 2, nu=6.0)
    R, S = cb.simulate_bekk(params, 100, rng)
    assert R.shape == (100, 2)
    assert S.shape == (100, 2, 2)
    assert all(linalg.is_positive_definite(s) for s in S)


@pytest.mark.slow
def test_recovers_simulated_bekk():
    truth = BekkParams(C=np.array([[0.2, 0.05], [0.0, 0.2]]), a_diag=np.array([0.3, 0.25]), b_diag=np.array([0.92, 0.94]))
    R, _ = cb.simulate_bekk(truth, 5000, np.random.default_rng(21))
    fit = cb.fit_mle("normal", R, seed=0, log_level="WARNING")
    assert np.max(np.abs(fit.params.a_diag - truth.a_diag)) < 0.08
    assert np.max(np.abs(fit.params.b_diag - truth.b_diag)) < 0.08


@pytest.mark.slow
def test_independent_series_have_small_covariance():
    R = np.random.default_rng(5).standard_normal((5000, 2))
    fit = cb.fit_mle("normal", R, seed=0, log_level="WARNING")
    sigmas = cb.bekk_filter(fit.params, R, fit.sigma0)
    assert abs(np.mean(sigmas[:, 0, 1])) < 0.1
