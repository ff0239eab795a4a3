"""Lasso by cyclic coordinate descent in covariance (Gram) form.

The objective is ``(1/T) sum_t (y_t - x_t' b)^2 + lam * ||b||_1``, which in
terms of ``G = X'X/T`` and ``c = X'y/T`` reads ``b'Gb - 2c'b + lam ||b||_1``.
A coordinate update is therefore ``b_j = soft(c_j - sum_{l!=j} G_jl b_l, lam/2) / G_jj``.
"""
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LassoConfig:
    lam: float
    max_iters: int = 10_000
    tol: float = 1e-8

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("penalty must be nonnegative")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@njit(cache=True)
def _kkt_violation(b, r, lam):
    # r = c - G b; the smooth gradient is -2 r
    worst = 0.0
    for j in range(b.shape[0]):
        g = 2.0 * r[j]
        if b[j] == 0.0:
            v = abs(g) - lam
        elif b[j] > 0.0:
            v = abs(g - lam)
        else:
            v = abs(g + lam)
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def _sweep(G, b, r, half, active_only):
    q = b.shape[0]
    biggest = 0.0
    for j in range(q):
        old = b[j]
        if active_only and old == 0.0:
            continue
        gjj = G[j, j]
        if gjj <= 0.0:
            continue
        z = r[j] + gjj * old
        if z > half:
            new = (z - half) / gjj
        elif z < -half:
            new = (z + half) / gjj
        else:
            new = 0.0
        delta = new - old
        if delta != 0.0:
            b[j] = new
            for l in range(q):
                r[l] -= G[l, j] * delta
            if abs(delta) > biggest:
                biggest = abs(delta)
    return biggest


@njit(cache=True)
def _cd_single(G, c, lam, b, max_iters, tol):
    half = 0.5 * lam
    r = c - G @ b
    sweeps = 0
    while sweeps < max_iters:
        biggest = _sweep(G, b, r, half, False)
        sweeps += 1
        # settle the active set before paying for another full sweep
        while biggest >= tol and sweeps < max_iters:
            biggest = _sweep(G, b, r, half, True)
            sweeps += 1
        if biggest < tol:
            r = c - G @ b
            if _kkt_violation(b, r, lam) <= tol:
                return sweeps, True
    return sweeps, False


@njit(cache=True)
def _cd_multi(G, C, lam, B, max_iters, tol):
    n_resp = C.shape[1]
    sweeps = np.zeros(n_resp, dtype=np.int64)
    ok = np.zeros(n_resp, dtype=np.bool_)
    for k in range(n_resp):
        b = B[:, k].copy()
        s, conv = _cd_single(G, C[:, k].copy(), lam, b, max_iters, tol)
        B[:, k] = b
        sweeps[k] = s
        ok[k] = conv
    return sweeps, ok


def lasso_gram(G, C, lam, init=None, max_iters=10_000, tol=1e-8):
    """Solve independent lasso problems sharing the Gram matrix ``G``.

    ``C`` holds one right-hand side ``X'y/T`` per column; the result has the
    same shape.  A :class:`ConvergenceWarning` is issued (and the last
    iterate returned) for columns that did not certify the KKT conditions
    to within ``tol`` after ``max_iters`` sweeps.
    """
    G = np.ascontiguousarray(G, dtype=float)
    C = np.asarray(C, dtype=float)
    vector = C.ndim == 1
    C2 = np.ascontiguousarray(C.reshape(-1, 1) if vector else C)
    B = np.zeros_like(C2) if init is None else np.array(init, dtype=float).reshape(C2.shape)
    _, ok = _cd_multi(G, C2, float(lam), B, int(max_iters), float(tol))
    if not ok.all():
        warnings.warn(f"lasso did not converge for {int((~ok).sum())} of {ok.size} responses "
                      f"within {max_iters} sweeps", ConvergenceWarning, stacklevel=2)
    return B.ravel() if vector else B


def lasso_regress(design, response, cfg):
    """Lasso fit of ``response`` on ``design`` (no intercept)."""
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"design {x.shape} and response {y.shape} do not align")
    if x.shape[0] < 2:
        raise ValueError("need at least two observations")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")
    n = x.shape[0]
    return lasso_gram(x.T @ x / n, x.T @ y / n, cfg.lam, max_iters=cfg.max_iters, tol=cfg.tol)


def lasso_objective(design, response, beta, lam):
    x = np.asarray(design, dtype=float)
    resid = np.asarray(response, dtype=float) - x @ beta
    return float(resid @ resid / x.shape[0] + lam * np.abs(beta).sum())


def kkt_residual(design, response, beta, lam):
    """Largest per-coordinate violation of the lasso optimality conditions."""
    x = np.asarray(design, dtype=float)
    n = x.shape[0]
    r = x.T @ (np.asarray(response, dtype=float) - x @ beta) / n
    return float(_kkt_violation(np.asarray(beta, dtype=float), r, float(lam)))
