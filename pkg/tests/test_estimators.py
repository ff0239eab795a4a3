import numpy as np
import pytest

from svartest.estimators import (
    cv_select_lambda,
    decorrelated_residuals,
    default_grid,
    default_lambda,
    estimate_A,
    estimate_variance,
    estimate_w,
    fit,
    sample_partial_cov,
)
from svartest.lasso import LassoConfig
from svartest.model import NoiseKind, TestSpec, VarModel, decorrelation_weights, population_cov, simulate


@pytest.fixture(scope="module")
def block_sample():
    A = np.kron(np.eye(5), np.array([[0.25, 0.5], [0.5, 0.25]]))
    model = VarModel(A)
    return model, simulate(model, 4000, seed=3)


def test_default_lambda_scaling():
    assert default_lambda(1, 30, 1000, 2.0) == pytest.approx(2 * np.sqrt(np.log(30) / 1000))
    g = default_grid(1, 30, 1000)
    assert g.size == 20 and np.all(np.diff(g) > 0)


def test_estimate_A_recovers_support(block_sample):
    model, s = block_sample
    a = estimate_A(s, LassoConfig(0.05))
    assert a.shape == (10, 10)
    assert np.abs(a - model.stacked).max() < 0.1
    assert np.abs(a[model.stacked == 0]).max() < 0.05


def test_estimate_A_dantzig_matches_lasso_at_double_penalty(block_sample):
    _, s = block_sample
    # the lasso's optimality conditions bound the score by lam/2
    a_l = estimate_A(s, LassoConfig(0.1, tol=1e-12), "lasso")
    a_d = estimate_A(s, 0.05, "dantzig")
    assert np.abs(a_l - a_d).max() < 0.05


def test_estimate_w_close_to_population(block_sample):
    model, s = block_sample
    w = estimate_w(s, [0, 3], LassoConfig(0.02))
    w_true = decorrelation_weights(population_cov(model), [0, 3])
    assert w.shape == (8, 2)
    assert np.abs(w - w_true).max() < 0.06


def test_column_order_follows_spec(block_sample):
    _, s = block_sample
    w1 = estimate_w(s, [3, 0], LassoConfig(0.02))
    w2 = estimate_w(s, [0, 3], LassoConfig(0.02))
    assert np.allclose(w1, w2[:, ::-1])
    r = decorrelated_residuals(s, [3, 0], w1)
    assert np.allclose(r[:, 0], s.lag_vectors[:, 3] - s.lag_vectors[:, [1, 2, 4, 5, 6, 7, 8, 9]] @ w1[:, 0])


def test_sample_partial_cov_with_zero_weights(block_sample):
    _, s = block_sample
    uh, ut = sample_partial_cov(s, [1], np.zeros((9, 1)))
    x = s.lag_vectors[:, 1]
    assert uh[0, 0] == pytest.approx(x @ x / s.T)
    assert ut[0, 0] == pytest.approx(x @ x / s.T)


def test_variance_estimate_at_truth(block_sample):
    model, s = block_sample
    assert estimate_variance(s, model.stacked) == pytest.approx(1.0, rel=0.03)


def test_cv_single_point_grid_and_validation(block_sample):
    _, s = block_sample
    assert cv_select_lambda(s, [0.3]) == 0.3
    with pytest.raises(ValueError):
        cv_select_lambda(s, [])
    with pytest.raises(ValueError):
        cv_select_lambda(s, [0.3, 0.1])
    with pytest.raises(ValueError):
        cv_select_lambda(s.head(10), [0.1, 0.3])


def test_cv_tie_goes_to_larger_penalty(block_sample):
    _, s = block_sample
    # every penalty above lambda_max gives the zero fit, so all tie
    lam_max = 2 * np.abs(s.lag_vectors.T @ s.responses / s.T).max()
    grid = lam_max * np.array([2.0, 3.0, 4.0])
    assert cv_select_lambda(s, grid) == grid[-1]


def test_cv_prefers_reasonable_penalty(block_sample):
    _, s = block_sample
    grid = np.geomspace(1e-4, 10.0, 15)
    lam = cv_select_lambda(s, grid)
    assert grid[0] < lam < 1.0


def test_fit_shapes_and_modes(block_sample):
    _, s = block_sample
    spec = TestSpec.from_pairs([(0, 1), (0, 2), (3, 3)])
    for tuning in ["cv", "fixed"]:
        res = fit(s, spec, tuning=tuning)
        assert res.a_hat.shape == (10, 10)
        assert [w.shape for w in res.w_hat] == [(8, 2), (9, 1)]
        assert [u.shape for u in res.ups_hat] == [(2, 2), (1, 1)]
        assert np.allclose(res.ups_hat[0], res.ups_hat[0].T)
        assert res.sigma2_hat > 0
        assert len(res.lambda_w) == 2
    with pytest.raises(ValueError):
        fit(s, spec, tuning="bic")
    with pytest.raises(ValueError):
        fit(s, spec, method="ols")


def test_fit_rejects_out_of_range_spec(block_sample):
    _, s = block_sample
    with pytest.raises(IndexError):
        fit(s, TestSpec(((0, (12,)),)), tuning="fixed")


def test_estimation_error_shrinks_with_T():
    A = np.kron(np.eye(5), np.array([[0.25, 0.5], [0.5, 0.25]]))
    model = VarModel(A)
    errs = []
    for T in [250, 4000]:
        s = simulate(model, T, seed=T)
        errs.append(np.linalg.norm(estimate_A(s, default_lambda(1, 10, T, 1.0)) - A))
    assert errs[1] < 0.5 * errs[0]
