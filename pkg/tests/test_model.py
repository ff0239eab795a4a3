import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg as sla

from conftest import random_stable
from svartest.graphs import gen_random_symmetric_A
from svartest.model import (
    NoiseKind,
    TestSpec,
    UnstableModelError,
    VarModel,
    build_lagged,
    decorrelation_weights,
    partial_covariance,
    population_cov,
    psi_series,
    simulate,
    sparsity_levels,
    stability_beta,
)


def test_varmodel_validation():
    with pytest.raises(ValueError):
        VarModel(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        VarModel(np.zeros((1, 2, 2)), noise_sigma=0.0)
    with pytest.raises(ValueError):
        VarModel(np.array([[np.nan]]))


def test_stacked_round_trip_and_companion():
    rng = np.random.default_rng(0)
    stacked = rng.standard_normal((3, 6))
    m = VarModel.from_stacked(stacked, p=2)
    assert np.array_equal(m.stacked, stacked)
    f = m.companion()
    assert np.array_equal(f[:3], stacked)
    assert np.array_equal(f[3:, :3], np.eye(3))
    assert np.array_equal(f[3:, 3:], np.zeros((3, 3)))


def test_psi_recursion_matches_direct_expansion():
    rng = np.random.default_rng(1)
    model = random_stable(rng, 4, p=3, radius=0.7)
    psi = psi_series(model)
    # brute force: Psi_n is the top-left block of F^n
    f = model.companion()
    fn = np.eye(f.shape[0])
    for n in range(25):
        assert np.allclose(psi.terms[n], fn[:4, :4], atol=1e-13)
        fn = fn @ f


def test_psi_second_term_example():
    a1 = np.diag([0.5, 0.2])
    a2 = 0.04 * np.eye(2)
    psi = psi_series(VarModel(np.stack([a1, a2])))
    assert np.allclose(psi.terms[1], a1)
    assert np.allclose(psi.terms[2], a1 @ a1 + a2)


def test_psi_truncation_and_tail():
    psi = psi_series(VarModel(0.5 * np.eye(3)))
    assert psi.norms[-1] < 1e-12
    assert psi.decay_rate == pytest.approx(0.5, rel=1e-6)
    assert psi.tail_bound < 1e-11


def test_psi_intermediate_zero_term_does_not_truncate():
    # Psi_1 = 0 but Psi_2 = A(2) != 0
    model = VarModel(np.stack([np.zeros((2, 2)), 0.5 * np.eye(2)]))
    psi = psi_series(model)
    assert psi.truncation_horizon > 2
    assert np.allclose(psi.terms[2], 0.5 * np.eye(2))


def test_stability_beta_scalar_closed_form():
    # Psi_n = a^n: beta = sum_i a^i / sqrt(1 - a^2) = 1 / ((1 - a) sqrt(1 - a^2))
    assert stability_beta(VarModel(np.array([[0.5]]))) == pytest.approx(2 / np.sqrt(0.75), rel=1e-10)
    assert stability_beta(VarModel(np.zeros((1, 3, 3)))) == pytest.approx(1.0, abs=1e-12)


def test_unstable_models_rejected():
    for model in [VarModel(1.2 * np.eye(2)), VarModel(np.eye(2)),
                  VarModel(np.stack([0.6 * np.eye(2), 0.6 * np.eye(2)]))]:
        for fn in (psi_series, stability_beta, population_cov):
            with pytest.raises(UnstableModelError):
                fn(model)
        with pytest.raises(UnstableModelError):
            simulate(model, 10)


def test_non_normal_stable_model_accepted():
    # operator norm > 1 yet stationary
    model = VarModel(np.array([[0.5, 3.0], [0.0, 0.5]]))
    psi = psi_series(model)
    assert psi.norms[1] > 1.0
    assert np.isfinite(stability_beta(model))


def test_population_cov_block_closed_form():
    a = np.array([[0.25, 0.5], [0.5, 0.25]])
    cov = population_cov(VarModel(a))
    assert np.allclose(cov.upsilon, [[1.67619048, 0.60952381], [0.60952381, 1.67619048]], atol=1e-8)


def test_population_cov_matches_psi_sum_and_scipy():
    rng = np.random.default_rng(2)
    model = random_stable(rng, 3, p=2, radius=0.8)
    model = VarModel(model.coeffs, noise_sigma=0.7)
    cov = population_cov(model)
    f = model.companion()
    q = np.zeros((6, 6))
    q[:3, :3] = 0.49 * np.eye(3)
    assert np.allclose(cov.upsilon, sla.solve_discrete_lyapunov(f, q), atol=1e-10)
    psi = psi_series(model)
    sigma_x = 0.49 * sum(t @ t.T for t in psi.terms)
    assert np.allclose(cov.sigma_x, sigma_x, atol=1e-10)


def test_decorrelation_scalar_example():
    # Ups = (I - A^2)^-1 = [[176, 64], [64, 176]] / 105, so w* = 64/176 = 4/11
    a = np.array([[0.25, 0.5], [0.5, 0.25]])
    cov = population_cov(VarModel(a))
    w = decorrelation_weights(cov, [0])
    assert w[0, 0] == pytest.approx(0.60952381 / 1.67619048, rel=1e-7)
    assert w[0, 0] == pytest.approx(4 / 11, rel=1e-12)
    assert partial_covariance(cov, [0])[0, 0] == pytest.approx(1.45454545, rel=1e-8)


@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(1, 2))
@settings(max_examples=40, deadline=None)
def test_partial_covariance_identities(seed, M, p):
    rng = np.random.default_rng(seed)
    model = random_stable(rng, M, p=p, radius=0.85)
    cov = population_cov(model)
    ups = cov.upsilon
    q = ups.shape[0]
    d = sorted(rng.choice(q, size=rng.integers(1, min(3, q - 1) + 1), replace=False).tolist())
    dc = [i for i in range(q) if i not in d]
    w = decorrelation_weights(cov, d)
    # orthogonality: Ups[Dc, D] = Ups[Dc, Dc] w*
    assert np.allclose(ups[np.ix_(dc, d)], ups[np.ix_(dc, dc)] @ w, atol=1e-8)
    # inverse of the Schur complement is a block of the inverse
    inv = np.linalg.inv(ups)
    assert np.allclose(np.linalg.inv(partial_covariance(cov, d)), inv[np.ix_(d, d)], atol=1e-8)


def _bound_c1(beta, p):
    return ((1 - beta) / (1 - beta ** (p + 1))) ** 2 if beta > 1 else (p + 1) ** -2.0


@pytest.mark.parametrize("seed", range(8))
def test_eigenvalues_bounded_by_stability_functional(seed):
    rng = np.random.default_rng(seed)
    p = 1 + seed % 2
    model = random_stable(rng, 5, p=p, radius=0.6 + 0.04 * seed)
    lam = np.linalg.eigvalsh(population_cov(model).upsilon)
    beta = stability_beta(model)
    assert lam.max() <= beta ** 2 * (1 + 1e-10)
    assert lam.min() >= _bound_c1(beta, p) * (1 - 1e-10)


def test_w_sparsity_within_d2_rho2_on_symmetric_models():
    spec = TestSpec.from_pairs([(1, 3), (1, 5), (3, 3), (3, 4), (5, 4), (5, 8)], one_based=True)
    for seed in range(100):
        A = gen_random_symmetric_A(30, 2, seed=seed)
        model = VarModel(A)
        rho, s = sparsity_levels(model, population_cov(model), spec)
        for (_, cols), s_m in zip(spec.entries, s):
            assert s_m <= len(cols) ** 2 * max(rho) ** 2


def test_w_sparsity_can_exceed_d2_rho():
    # with three neighbours per node, w* for a single tested column touches
    # every node at distance two, which is more than d^2 * rho = 3
    A = gen_random_symmetric_A(30, 3, seed=0)
    model = VarModel(A)
    rho, s = sparsity_levels(model, population_cov(model), TestSpec(((0, (0,)),)))
    assert max(rho) == 3
    assert s[0] > 1 * max(rho)
    assert s[0] <= 1 * max(rho) ** 2


def test_testspec_grouping_and_split():
    spec = TestSpec.from_pairs([(1, 3), (1, 5), (3, 3)], null_values=[0.1, 0.2, 0.3], one_based=True)
    assert spec.entries == ((0, (2, 4)), (2, (2,)))
    assert spec.d == 3
    assert [v.tolist() for v in spec.split(spec.null_values)] == [[0.1, 0.2], [0.3]]
    assert spec.pairs() == [(0, 2), (0, 4), (2, 2)]
    stacked = np.arange(25.0).reshape(5, 5)
    assert spec.extract(stacked).tolist() == [2.0, 4.0, 12.0]


@pytest.mark.parametrize("kwargs", [
    dict(entries=()),
    dict(entries=((0, (1,)), (0, (2,)))),
    dict(entries=((0, (1, 1)),)),
    dict(entries=((0, (1,)),), null_values=[1.0, 2.0]),
    dict(entries=((0, (1,)),), alpha=1.0),
])
def test_testspec_rejects_bad_input(kwargs):
    with pytest.raises(ValueError):
        TestSpec(**kwargs)


def test_testspec_validate_dimensions():
    spec = TestSpec(((0, (5,)),))
    spec.validate(6)
    with pytest.raises(IndexError):
        spec.validate(5)


def test_build_lagged_layout():
    series = np.arange(12.0).reshape(6, 2)
    s = build_lagged(series, 2)
    assert s.T == 4 and s.M == 2
    # lag vector at the first transition is (X_1, X_0)
    assert s.lag_vectors[0].tolist() == [2.0, 3.0, 0.0, 1.0]
    assert s.responses[0].tolist() == [4.0, 5.0]
    assert s.head(2).T == 2 and s.tail(1).responses[0].tolist() == [10.0, 11.0]


def test_simulate_deterministic_and_noise_bookkeeping():
    model = VarModel(np.array([[0.3, 0.1], [0.0, 0.5]]))
    a = simulate(model, 50, seed=4, keep_noise=True)
    b = simulate(model, 50, seed=4)
    assert np.array_equal(a.series, b.series)
    # responses are exactly A x_t + eps_t
    assert np.allclose(a.responses, a.lag_vectors @ model.stacked.T + a.noise, atol=1e-14)
    c = simulate(model, 50, seed=5)
    assert not np.array_equal(a.series, c.series)


def test_simulate_moments_match_population_cov():
    noise = NoiseKind("uniform", 1.0)
    model = VarModel(np.array([[0.25, 0.5], [0.5, 0.25]]), noise_sigma=np.sqrt(noise.variance))
    s = simulate(model, 200_000, noise, seed=9)
    emp = s.lag_vectors.T @ s.lag_vectors / s.T
    assert np.allclose(emp, population_cov(model).upsilon, atol=0.02)


def test_noise_kinds_variance():
    rng = np.random.default_rng(0)
    for kind in ["gaussian", "uniform", "rademacher"]:
        nk = NoiseKind(kind, 2.0)
        x = nk.draw(rng, 400_000)
        assert x.var() == pytest.approx(nk.variance, rel=0.02)
    with pytest.raises(ValueError):
        NoiseKind("cauchy")
