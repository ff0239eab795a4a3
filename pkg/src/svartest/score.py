"""Decorrelated score statistics, one-step estimators and confidence regions."""
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import List, Optional

import numpy as np

from .chi2 import chi2_quantile, chi2_sf
from .estimators import decorrelated_residuals
from .linalg import solve_linear
from .model import partial_covariance

STATISTICS = ("U_hat", "U_tilde", "R_hat")


class DegenerateFitError(ValueError):
    pass


@dataclass
class ScoreParts:
    """Per tested row: the decorrelated score at the null values
    (``s_hat``), the score at the full estimate (``s_tilde``) and the
    one-step estimator of the tested coefficients (``a_onestep``)."""

    s_hat: List[np.ndarray]
    s_tilde: List[np.ndarray]
    a_onestep: List[np.ndarray]
    T: int


@dataclass
class TestReport:
    statistic_kind: str
    value: float
    df: int
    p_value: float
    reject: bool
    alpha: float
    sigma2_used: float
    noncentrality_reference: Optional[float] = None

    __test__ = False

    def summary(self):
        return (f"{self.statistic_kind} value={self.value:.6g} df={self.df} "
                f"p_value={self.p_value:.6g} reject={self.reject}")

    def to_dict(self):
        return asdict(self)


@lru_cache(maxsize=256)
def critical_value(df, alpha):
    """Upper ``alpha`` quantile of the central chi-square law."""
    return chi2_quantile(df, 1.0 - alpha)


def make_report(kind, value, df, alpha, sigma2, noncentrality=None):
    """Build a report whose decision is taken from the critical value.

    The p-value is the exact upper tail; inside the ``~1e-9`` band where it
    could disagree with the quantile comparison it is nudged to the side of
    the decision so that ``reject <=> p_value < alpha`` always holds.
    """
    crit = critical_value(int(df), float(alpha))
    reject = bool(value > crit)
    p = chi2_sf(df, value)
    if reject and p >= alpha:
        p = np.nextafter(alpha, 0.0)
    elif not reject and p < alpha:
        p = alpha
    return TestReport(kind, float(value), int(df), float(p), reject, float(alpha),
                      float(sigma2), noncentrality)


def decorrelated_score(sample, fit, spec):
    """Decorrelated scores and one-step estimators for each tested row.

    The null values in ``spec`` are subtracted from the response before
    scoring, so a nonzero hypothesized value is handled by translation.
    """
    x = sample.lag_vectors
    y = sample.responses
    T = x.shape[0]
    q = x.shape[1]
    s_hat, s_tilde, a_one = [], [], []
    for i, (m, cols) in enumerate(spec.entries):
        d = np.asarray(cols)
        mask = np.ones(q, dtype=bool)
        mask[d] = False
        dc = np.flatnonzero(mask)
        a_row = fit.a_hat[m]
        r = decorrelated_residuals(sample, cols, fit.w_hat[i])
        resid_null = y[:, m] - x[:, d] @ spec.null_for_row(i) - x[:, dc] @ a_row[dc]
        resid_full = y[:, m] - x @ a_row
        sh = -(r.T @ resid_null) / T
        st = -(r.T @ resid_full) / T
        try:
            step = solve_linear(fit.ups_tilde[i], st)
        except ValueError as exc:
            raise DegenerateFitError(f"partial covariance estimate for row {m} is singular") from exc
        s_hat.append(sh)
        s_tilde.append(st)
        a_one.append(a_row[d] - step)
    return ScoreParts(s_hat, s_tilde, a_one, T)


def _quad_inverse(parts, mats):
    total = 0.0
    for s, mat in zip(parts.s_hat, mats):
        try:
            total += float(s @ solve_linear(mat, s))
        except ValueError as exc:
            raise DegenerateFitError("partial covariance estimate is singular") from exc
    return total


def statistic_u_hat(parts, fit, spec, sigma2):
    """Score statistic with a known noise variance ``sigma2``."""
    if not sigma2 > 0:
        raise ValueError("known noise variance must be positive")
    value = parts.T * _quad_inverse(parts, fit.ups_hat) / sigma2
    return make_report("U_hat", value, spec.d, spec.alpha, sigma2)


def statistic_u_tilde(parts, fit, spec):
    """Score statistic with the plug-in residual variance."""
    if not fit.sigma2_hat > 0:
        raise DegenerateFitError("estimated noise variance is zero")
    value = parts.T * _quad_inverse(parts, fit.ups_hat) / fit.sigma2_hat
    return make_report("U_tilde", value, spec.d, spec.alpha, fit.sigma2_hat)


def _r_value(centers, shapes, theta_pieces, T, sigma2):
    quad = 0.0
    for a, u, th in zip(centers, shapes, theta_pieces):
        diff = a - th
        quad += float(diff @ u @ diff)
    return T * quad / sigma2


def statistic_r_hat(parts, fit, spec, sigma2=None):
    """One-step (confidence-region) statistic evaluated at the null values.

    ``sigma2`` replaces the plug-in variance when given.
    """
    s2 = fit.sigma2_hat if sigma2 is None else sigma2
    if not s2 > 0:
        raise DegenerateFitError("noise variance is zero")
    value = _r_value(parts.a_onestep, fit.ups_hat, spec.split(spec.null_values), parts.T, s2)
    return make_report("R_hat", value, spec.d, spec.alpha, s2)


def r_hat_sandwich(parts, fit, sigma2=None):
    """``R_hat`` through the scores: ``T sum S' (Ut')^-1 Uh Ut^-1 S / sigma2``."""
    s2 = fit.sigma2_hat if sigma2 is None else sigma2
    total = 0.0
    for s, uh, ut in zip(parts.s_hat, fit.ups_hat, fit.ups_tilde):
        v = solve_linear(ut, s)
        total += float(v @ uh @ v)
    return parts.T * total / s2


@dataclass
class ConfidenceRegion:
    """Ellipsoid ``{theta : (T/sigma2) sum (a - theta)' U (a - theta) <= crit}``."""

    centers: List[np.ndarray]
    shapes: List[np.ndarray]
    radius2: float
    alpha: float
    T: int
    sigma2: float
    critical: float

    def contains(self, theta):
        pieces = _split_like(self.centers, theta)
        return _r_value(self.centers, self.shapes, pieces, self.T, self.sigma2) <= self.critical

    @property
    def center(self):
        return np.concatenate(self.centers)


def _split_like(pieces, vector):
    vector = np.asarray(vector, dtype=float)
    out, start = [], 0
    for p in pieces:
        out.append(vector[start:start + p.size])
        start += p.size
    if start != vector.size:
        raise ValueError(f"expected a vector of length {start}, got {vector.size}")
    return out


def confidence_region(parts, fit, spec):
    crit = critical_value(spec.d, spec.alpha)
    if not fit.sigma2_hat > 0:
        raise DegenerateFitError("estimated noise variance is zero")
    return ConfidenceRegion(list(parts.a_onestep), list(fit.ups_hat),
                            crit * fit.sigma2_hat / parts.T, spec.alpha, parts.T,
                            fit.sigma2_hat, crit)


def noncentrality(model, cov, spec, delta):
    """Squared norm of the transformed alternative direction.

    Computed as ``sum_m delta_m' Ups^(m) delta_m / sigma*^2``; dividing by the
    noise variance expresses it on the unit-noise scale the statistics are
    standardized to.
    """
    total = 0.0
    for (_, cols), dm in zip(spec.entries, spec.split(delta)):
        total += float(dm @ partial_covariance(cov, cols) @ dm)
    return total / model.noise_sigma ** 2


def run_test(sample, fit_result, spec, statistic="U_tilde", sigma2=None):
    """Compute one statistic end to end from a fitted sample."""
    parts = decorrelated_score(sample, fit_result, spec)
    if statistic == "U_tilde":
        return statistic_u_tilde(parts, fit_result, spec)
    if statistic == "R_hat":
        return statistic_r_hat(parts, fit_result, spec, sigma2)
    if statistic == "U_hat":
        if sigma2 is None:
            raise ValueError("U_hat needs the known noise variance")
        return statistic_u_hat(parts, fit_result, spec, sigma2)
    raise ValueError(f"unknown statistic {statistic!r}; expected one of {STATISTICS}")
