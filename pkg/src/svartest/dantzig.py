"""Dantzig selector through a dense two-phase simplex.

``min ||b||_1  s.t.  ||c - G b||_inf <= lam`` with ``G = X'X/T`` and
``c = X'y/T`` becomes a linear program in ``b = b+ - b-`` with ``2q``
inequality rows.  Pivoting follows Bland's rule, so the method terminates
on degenerate problems; the price is more pivots than a steepest-edge rule,
each costing ``O(q^2)`` on the ``2q x 6q`` tableau.
"""
import numpy as np
from numba import njit

from .linalg import SingularMatrixError, solve_linear

_PIVOT_TOL = 1e-11


class InfeasibleError(ValueError):
    pass


class SimplexError(RuntimeError):
    pass


@njit(cache=True)
def _pivot(tab, r, e):
    n_rows, n_cols = tab.shape
    piv = tab[r, e]
    for j in range(n_cols):
        tab[r, j] /= piv
    for i in range(n_rows):
        if i == r:
            continue
        f = tab[i, e]
        if f != 0.0:
            for j in range(n_cols):
                tab[i, j] -= f * tab[r, j]
        tab[i, e] = 0.0
    tab[r, e] = 1.0


@njit(cache=True)
def _bland(tab, basis, n_enter, tol, max_pivots):
    """Run simplex pivots on ``tab`` (last row = reduced costs, last column
    = right-hand side).  Returns (status, pivots); status 0 optimal,
    1 unbounded, 2 pivot cap."""
    m = tab.shape[0] - 1
    rhs = tab.shape[1] - 1
    for it in range(max_pivots):
        e = -1
        for j in range(n_enter):
            if tab[m, j] < -tol:
                e = j
                break
        if e < 0:
            return 0, it
        r = -1
        best = np.inf
        for i in range(m):
            a = tab[i, e]
            if a > tol:
                ratio = tab[i, rhs] / a
                if r < 0 or ratio < best - 1e-12 * max(1.0, abs(best)):
                    r = i
                    best = ratio
                elif abs(ratio - best) <= 1e-12 * max(1.0, abs(best)) and basis[i] < basis[r]:
                    r = i
        if r < 0:
            return 1, it
        _pivot(tab, r, e)
        basis[r] = e
    return 2, max_pivots


def linprog_ub(cost, a_ub, b_ub, max_pivots=200_000):
    """Minimize ``cost @ x`` subject to ``a_ub @ x <= b_ub`` and ``x >= 0``.

    Returns the optimal ``x``.  Raises :class:`InfeasibleError` when phase I
    cannot drive the artificial variables to zero.
    """
    cost = np.asarray(cost, dtype=float)
    a_ub = np.asarray(a_ub, dtype=float)
    b_ub = np.asarray(b_ub, dtype=float)
    m, n = a_ub.shape
    neg = b_ub < 0
    n_art = int(neg.sum())
    n_cols = n + m + n_art
    tab = np.zeros((m + 1, n_cols + 1))
    sign = np.where(neg, -1.0, 1.0)
    tab[:m, :n] = a_ub * sign[:, None]
    tab[:m, n:n + m] = np.diag(sign)
    tab[:m, -1] = b_ub * sign
    basis = np.empty(m, dtype=np.int64)
    art_rows = np.flatnonzero(neg)
    for k, i in enumerate(art_rows):
        tab[i, n + m + k] = 1.0
    basis[:] = n + np.arange(m)
    basis[art_rows] = n + m + np.arange(n_art)
    scale = max(1.0, float(np.abs(tab[:m]).max()))
    tol = _PIVOT_TOL * scale

    if n_art:
        # phase I: minimize the sum of artificials
        tab[m, :] = 0.0
        tab[m, n + m:n_cols] = 1.0
        tab[m, :] -= tab[art_rows, :].sum(axis=0)
        status, _ = _bland(tab, basis, n_cols, tol, max_pivots)
        if status != 0:
            raise SimplexError(f"phase I failed with status {status}")
        if -tab[m, -1] > 1e-9 * scale:
            raise InfeasibleError("linear program is infeasible")
        # pivot any remaining (zero-level) artificials out of the basis
        for i in range(m):
            if basis[i] >= n + m:
                cand = np.flatnonzero(np.abs(tab[i, :n + m]) > tol)
                if cand.size:
                    _pivot(tab, i, int(cand[0]))
                    basis[i] = int(cand[0])
        keep = basis < n + m
        tab = np.vstack([tab[:m][keep], tab[m:]])
        basis = basis[keep]
        tab = np.hstack([tab[:, :n + m], tab[:, -1:]])
        m = tab.shape[0] - 1

    full_cost = np.concatenate([cost, np.zeros(tab.shape[1] - 1 - n)])
    tab[m, :-1] = full_cost - full_cost[basis] @ tab[:m, :-1]
    tab[m, -1] = -full_cost[basis] @ tab[:m, -1]
    status, _ = _bland(tab, basis, tab.shape[1] - 1, tol, max_pivots)
    if status == 1:
        raise SimplexError("linear program is unbounded")
    if status != 0:
        raise SimplexError("simplex pivot cap reached")

    # recompute the basic solution from the original data to shed tableau drift
    x_full = np.zeros(n + a_ub.shape[0])
    xb = tab[:m, -1]
    if len(basis) == a_ub.shape[0]:
        full_a = np.hstack([a_ub, np.eye(a_ub.shape[0])])
        try:
            exact = solve_linear(full_a[:, basis], b_ub)
        except SingularMatrixError:
            exact = None
        if exact is not None and np.all(exact >= -1e-9 * scale):
            xb = exact
    x_full[basis] = np.clip(xb, 0.0, None)
    return x_full[:n]


def dantzig_gram(G, c, lam, max_pivots=200_000):
    """Dantzig selector from Gram-form inputs ``G`` and ``c``."""
    G = np.asarray(G, dtype=float)
    c = np.asarray(c, dtype=float)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    q = c.shape[0]
    if np.abs(c).max(initial=0.0) <= lam:
        return np.zeros(q)
    a_ub = np.block([[G, -G], [-G, G]])
    b_ub = np.concatenate([lam + c, lam - c])
    x = linprog_ub(np.ones(2 * q), a_ub, b_ub, max_pivots=max_pivots)
    return x[:q] - x[q:]


def dantzig_regress(design, response, lam):
    """Dantzig selector fit of ``response`` on ``design`` (no intercept)."""
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"design {x.shape} and response {y.shape} do not align")
    n = x.shape[0]
    return dantzig_gram(x.T @ x / n, x.T @ y / n, lam)
