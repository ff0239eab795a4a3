"""Sparse estimation of the coefficient matrix and decorrelation weights.

Both targets reduce to rows of independent sparse regressions that share a
Gram matrix: the rows of ``A`` regress ``X_{t+1,m}`` on the full lag vector,
and the columns of ``w_m`` regress the tested lag coordinates on the
remaining ones.  Gram matrices are formed once per sample.
"""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .dantzig import dantzig_gram
from .lasso import LassoConfig, lasso_gram

METHODS = ("lasso", "dantzig")
DEFAULT_LAMBDA_CONST = 2.0
CV_TRAIN_FRACTION = 0.9
CV_MIN_T = 20


def default_lambda(p, M, T, const=DEFAULT_LAMBDA_CONST):
    """Penalty of order ``sqrt(log(pM) / T)``."""
    return const * np.sqrt(np.log(p * M) / T)


def default_grid(p, M, T, n=20, lo=0.05, hi=5.0):
    return np.geomspace(lo, hi, n) * np.sqrt(np.log(p * M) / T)


def _check_method(method):
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")


def _solve(G, C, cfg, method, init=None):
    """Column-wise sparse regression in Gram form."""
    if method == "lasso":
        return lasso_gram(G, C, cfg.lam, init=init, max_iters=cfg.max_iters, tol=cfg.tol)
    out = np.empty_like(C)
    for k in range(C.shape[1]):
        out[:, k] = dantzig_gram(G, C[:, k], cfg.lam)
    return out


def _as_cfg(cfg):
    return cfg if isinstance(cfg, LassoConfig) else LassoConfig(float(cfg))


def _split(q, d_set):
    d = np.asarray(list(d_set), dtype=int)
    mask = np.ones(q, dtype=bool)
    mask[d] = False
    if d.size == 0 or mask.sum() == 0:
        raise ValueError("column set must be a nonempty proper subset")
    return d, np.flatnonzero(mask)


def _gram_A(sample):
    x = sample.lag_vectors
    n = x.shape[0]
    return x.T @ x / n, x.T @ sample.responses / n


def _gram_w(sample, d_set, H=None):
    x = sample.lag_vectors
    if H is None:
        H = x.T @ x / x.shape[0]
    d, dc = _split(x.shape[1], d_set)
    return H[np.ix_(dc, dc)], H[np.ix_(dc, d)]


def estimate_A(sample, cfg, method="lasso"):
    """Row-wise sparse estimate of the ``M x pM`` coefficient matrix."""
    _check_method(method)
    G, C = _gram_A(sample)
    return _solve(G, C, _as_cfg(cfg), method).T


def estimate_w(sample, d_set, cfg, method="lasso"):
    """Sparse estimate of the decorrelation weights, ``(pM - d_m) x d_m``."""
    _check_method(method)
    G, C = _gram_w(sample, d_set)
    return _solve(G, C, _as_cfg(cfg), method)


def decorrelated_residuals(sample, d_set, w_hat):
    """``X_{t,D} - w' X_{t,Dc}`` for every ``t`` (shape ``T x d_m``)."""
    x = sample.lag_vectors
    d, dc = _split(x.shape[1], d_set)
    return x[:, d] - x[:, dc] @ w_hat


def sample_partial_cov(sample, d_set, w_hat):
    """Two sample estimates of the partial covariance of the tested coordinates.

    Returns ``(ups_hat, ups_tilde)``: the sample covariance of the
    decorrelated residuals ``r_t``, and the cross moment of ``r_t`` with the
    raw tested coordinates.
    """
    x = sample.lag_vectors
    d, _ = _split(x.shape[1], d_set)
    r = decorrelated_residuals(sample, d_set, w_hat)
    T = x.shape[0]
    ups_hat = r.T @ r / T
    ups_hat = 0.5 * (ups_hat + ups_hat.T)
    ups_tilde = r.T @ x[:, d] / T
    return ups_hat, ups_tilde


def estimate_variance(sample, a_hat):
    """Mean squared one-step residual over all nodes and times."""
    resid = sample.responses - sample.lag_vectors @ np.asarray(a_hat).T
    return float(np.mean(resid ** 2))


def cv_select_lambda(sample, grid, method="lasso", target="A", d_set=None,
                     train_fraction=CV_TRAIN_FRACTION, max_iters=10_000, tol=1e-8):
    """Pick a penalty by a single forward split of the series.

    The first ``train_fraction`` of the transitions (kept in time order)
    are used for fitting and the remainder for scoring the mean squared
    prediction error.  Ties go to the larger penalty.
    """
    _check_method(method)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("penalty grid is empty")
    if np.any(np.diff(grid) < 0):
        raise ValueError("penalty grid must be sorted ascending")
    if grid.size == 1:
        return float(grid[0])
    T = sample.T
    if T < CV_MIN_T:
        raise ValueError(f"cross-validation needs at least {CV_MIN_T} transitions, got {T}")
    n_train = int(round(train_fraction * T))
    train, test = sample.head(n_train), sample.tail(T - n_train)

    if target == "A":
        G, C = _gram_A(train)
        x_test, y_test = test.lag_vectors, test.responses
    elif target == "w":
        if d_set is None:
            raise ValueError("target 'w' needs a column set")
        G, C = _gram_w(train, d_set)
        d, dc = _split(sample.lag_vectors.shape[1], d_set)
        x_test, y_test = test.lag_vectors[:, dc], test.lag_vectors[:, d]
    else:
        raise ValueError(f"unknown target {target!r}")

    errors = np.empty(grid.size)
    coef = None
    for i in range(grid.size - 1, -1, -1):  # large to small, warm-started
        cfg = LassoConfig(grid[i], max_iters=max_iters, tol=tol)
        coef = _solve(G, C, cfg, method, init=coef)
        resid = y_test - x_test @ coef
        errors[i] = np.mean(resid ** 2)
    best = errors.min()
    winners = np.flatnonzero(errors <= best * (1.0 + 1e-12))
    return float(grid[winners.max()])


@dataclass
class FitResult:
    """Everything the score statistics need from one sample.

    Per-row lists follow the order of ``spec.entries``.
    """

    a_hat: np.ndarray
    w_hat: List[np.ndarray]
    ups_hat: List[np.ndarray]
    ups_tilde: List[np.ndarray]
    sigma2_hat: float
    lambda_a: float
    lambda_w: List[float]
    method: str = "lasso"
    meta: dict = field(default_factory=dict)


def fit(sample, spec, method="lasso", tuning="cv", lambda_const=DEFAULT_LAMBDA_CONST,
        lambda_w_const=None, grid=None, max_iters=10_000, tol=1e-8):
    """Estimate ``A``, the decorrelation weights and the partial covariances.

    ``tuning`` is ``"cv"`` (forward-split cross-validation over ``grid``,
    default :func:`default_grid`) or ``"fixed"`` (``const * sqrt(log(pM)/T)``).
    """
    _check_method(method)
    p, M, T = sample.p, sample.M, sample.T
    spec.validate(M, p)
    lambda_w_const = lambda_const if lambda_w_const is None else lambda_w_const
    if tuning == "cv":
        grid = default_grid(p, M, T) if grid is None else np.asarray(grid, dtype=float)
        lam_a = cv_select_lambda(sample, grid, method, "A", max_iters=max_iters, tol=tol)
        lam_w = [cv_select_lambda(sample, grid, method, "w", cols, max_iters=max_iters, tol=tol)
                 for _, cols in spec.entries]
    elif tuning == "fixed":
        lam_a = default_lambda(p, M, T, lambda_const)
        lam_w = [default_lambda(p, M, T, lambda_w_const)] * len(spec.entries)
    else:
        raise ValueError(f"tuning must be 'cv' or 'fixed', got {tuning!r}")

    H = sample.lag_vectors.T @ sample.lag_vectors / T
    C = sample.lag_vectors.T @ sample.responses / T
    a_hat = _solve(H, C, LassoConfig(lam_a, max_iters, tol), method).T
    w_hat, ups_hat, ups_tilde = [], [], []
    for (_, cols), lam in zip(spec.entries, lam_w):
        G, Cw = _gram_w(sample, cols, H)
        w = _solve(G, Cw, LassoConfig(lam, max_iters, tol), method)
        uh, ut = sample_partial_cov(sample, cols, w)
        w_hat.append(w)
        ups_hat.append(uh)
        ups_tilde.append(ut)
    return FitResult(a_hat, w_hat, ups_hat, ups_tilde, estimate_variance(sample, a_hat),
                     float(lam_a), [float(v) for v in lam_w], method)
