"""VAR(p) models, their population quantities and simulation.

Indices are 0-based throughout the Python API.  A lag vector at time ``t``
stacks ``X_t, X_{t-1}, ..., X_{t-p+1}`` so column ``j*M + i`` of the stacked
coefficient matrix multiplies node ``i`` at lag ``j + 1``.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .linalg import (
    ConvergenceError,
    lyapunov_solve,
    operator_norm,
    solve_linear,
    spectral_radius,
)

ZERO_THRESHOLD = 1e-10
DEFAULT_BURN_IN = 1000
OVERFLOW_GUARD = 1e150


class UnstableModelError(ValueError):
    """The model has no stationary solution (or a simulation diverged)."""


@dataclass(frozen=True)
class VarModel:
    """VAR(p) model ``X_{t+1} = sum_j A(j) X_{t-j+1} + eps_t``.

    Parameters
    ----------
    coeffs : array, shape (p, M, M)
        Lag coefficient matrices ``A(1), ..., A(p)``.
    noise_sigma : float
        Standard deviation of each noise coordinate.
    """

    coeffs: np.ndarray
    noise_sigma: float = 1.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 2:
            c = c[None]
        if c.ndim != 3 or c.shape[1] != c.shape[2] or c.shape[0] < 1:
            raise ValueError(f"coeffs must have shape (p, M, M), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        if not self.noise_sigma > 0:
            raise ValueError("noise_sigma must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "noise_sigma", float(self.noise_sigma))

    @classmethod
    def from_stacked(cls, stacked, p=1, noise_sigma=1.0):
        """Build from the ``M x pM`` matrix ``(A(1), ..., A(p))``."""
        stacked = np.asarray(stacked, dtype=float)
        m = stacked.shape[0]
        if stacked.shape[1] != p * m:
            raise ValueError(f"stacked matrix must be {m}x{p * m}, got {stacked.shape}")
        return cls(np.stack([stacked[:, j * m:(j + 1) * m] for j in range(p)]), noise_sigma)

    @property
    def p(self):
        return self.coeffs.shape[0]

    @property
    def M(self):
        return self.coeffs.shape[1]

    @property
    def stacked(self):
        return np.hstack(list(self.coeffs))

    def companion(self):
        """The ``pM x pM`` companion matrix of the lag polynomial."""
        p, m = self.p, self.M
        f = np.zeros((p * m, p * m))
        f[:m, :] = self.stacked
        if p > 1:
            f[m:, :-m] = np.eye((p - 1) * m)
        return f

    def spectral_radius(self):
        return spectral_radius(self.companion())


@dataclass(frozen=True)
class PsiSeries:
    """Moving-average coefficients ``Psi_0 = I, Psi_1, ..., Psi_H``."""

    terms: np.ndarray
    norms: np.ndarray
    truncation_horizon: int
    tail_bound: float
    decay_rate: float


@dataclass(frozen=True)
class PopulationCov:
    """Stationary covariance of the lag vector (``upsilon``) and of ``X_t``."""

    upsilon: np.ndarray
    sigma_x: np.ndarray


@dataclass(frozen=True)
class TestSpec:
    """Tested index set and null values.

    ``entries`` is a sequence of ``(row, columns)`` pairs with 0-based
    indices; ``null_values`` is the concatenation of the hypothesized values
    in the same order.
    """

    entries: tuple
    null_values: np.ndarray = None
    alpha: float = 0.05

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        entries = tuple((int(m), tuple(int(c) for c in cols)) for m, cols in self.entries)
        rows = [m for m, _ in entries]
        if not entries:
            raise ValueError("test spec needs at least one row")
        if len(set(rows)) != len(rows):
            raise ValueError("tested rows must be distinct")
        for m, cols in entries:
            if not cols:
                raise ValueError(f"row {m} has an empty column set")
            if len(set(cols)) != len(cols):
                raise ValueError(f"row {m} repeats a column")
            if m < 0 or min(cols) < 0:
                raise ValueError("indices must be nonnegative")
        d = sum(len(cols) for _, cols in entries)
        mu = np.zeros(d) if self.null_values is None else np.array(self.null_values, dtype=float).ravel()
        if mu.shape != (d,):
            raise ValueError(f"null_values must have length {d}, got {mu.shape[0]}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        mu.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "null_values", mu)

    @classmethod
    def from_pairs(cls, pairs, null_values=None, alpha=0.05, one_based=False):
        """Group ``(row, col)`` pairs by row, keeping first-seen order."""
        shift = 1 if one_based else 0
        grouped = {}
        for m, c in pairs:
            grouped.setdefault(int(m) - shift, []).append(int(c) - shift)
        return cls(tuple(grouped.items()), null_values, alpha)

    @property
    def d(self):
        return sum(len(cols) for _, cols in self.entries)

    @property
    def rows(self):
        return [m for m, _ in self.entries]

    def split(self, vector):
        """Split a length-``d`` vector into per-row pieces."""
        vector = np.asarray(vector, dtype=float)
        out, start = [], 0
        for _, cols in self.entries:
            out.append(vector[start:start + len(cols)])
            start += len(cols)
        return out

    def null_for_row(self, i):
        return self.split(self.null_values)[i]

    def pairs(self):
        return [(m, c) for m, cols in self.entries for c in cols]

    def validate(self, M, p=1):
        for m, cols in self.entries:
            if m >= M:
                raise IndexError(f"tested row {m} outside 0..{M - 1}")
            if max(cols) >= p * M:
                raise IndexError(f"tested column {max(cols)} outside 0..{p * M - 1}")
            if len(cols) >= p * M:
                raise ValueError("column set must be a proper subset")

    def with_null(self, null_values):
        return TestSpec(self.entries, null_values, self.alpha)

    def extract(self, stacked):
        """Concatenate ``stacked[m, D_m]`` over the tested rows."""
        stacked = np.asarray(stacked)
        return np.concatenate([stacked[m, list(cols)] for m, cols in self.entries])


@dataclass
class LaggedSample:
    """Observed series with its lag vectors and one-step-ahead responses.

    ``series`` has ``T + p`` rows holding ``X_{1-p}, ..., X_T``.  Row ``t`` of
    ``lag_vectors`` is the stacked vector at time ``t`` (``t = 0..T-1``) and
    row ``t`` of ``responses`` is ``X_{t+1}``.  ``noise`` is only populated
    by the simulator in diagnostic mode.
    """

    series: np.ndarray
    lag_vectors: np.ndarray
    responses: np.ndarray
    p: int
    noise: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def T(self):
        return self.lag_vectors.shape[0]

    @property
    def M(self):
        return self.responses.shape[1]

    def head(self, n):
        """The sample restricted to its first ``n`` transitions."""
        noise = None if self.noise is None else self.noise[:n]
        return LaggedSample(self.series[:n + self.p], self.lag_vectors[:n],
                            self.responses[:n], self.p, noise)

    def tail(self, n):
        """The sample restricted to its last ``n`` transitions."""
        noise = None if self.noise is None else self.noise[-n:]
        return LaggedSample(self.series[-(n + self.p):], self.lag_vectors[-n:],
                            self.responses[-n:], self.p, noise)


# ---------------------------------------------------------------------------
# population quantities


def _check_stationary(model):
    rho = model.spectral_radius()
    if rho >= 1.0:
        raise UnstableModelError(f"model is not stationary (spectral radius ~ {rho:.6g} >= 1)")
    return rho


def _geometric_rate(norms):
    """Least-squares decay rate over the last (up to) 10 positive norms."""
    tail = norms[-10:]
    tail = tail[tail > 0]
    if tail.size < 2:
        return 0.0
    j = np.arange(tail.size, dtype=float)
    slope = np.polyfit(j, np.log(tail), 1)[0]
    return float(np.exp(slope))


def psi_series(model, tol=1e-12, max_horizon=10_000):
    """Moving-average representation of a stationary VAR(p).

    Terms follow ``Psi_n = sum_{i=1}^{min(n,p)} A(i) Psi_{n-i}``.  The series
    is cut at the first horizon where the last ``p`` terms all have operator
    norm below ``tol`` (or at ``max_horizon``); the tail beyond it is
    estimated from the geometric decay rate of the trailing norms.
    """
    rho = _check_stationary(model)
    p, m = model.p, model.M
    terms = [np.eye(m)]
    norms = [1.0]
    small_run = 0
    for n in range(1, max_horizon + 1):
        nxt = np.zeros((m, m))
        for i in range(1, min(n, p) + 1):
            nxt = nxt + model.coeffs[i - 1] @ terms[n - i]
        terms.append(nxt)
        nrm = operator_norm(nxt, tol=1e-8)
        norms.append(nrm)
        small_run = small_run + 1 if nrm < tol else 0
        if small_run >= p:
            break
    norms_arr = np.array(norms)
    rate = _geometric_rate(norms_arr)
    if rate >= 1.0:
        if len(terms) > max_horizon:
            raise UnstableModelError("Psi norms are not decaying; model looks unstable")
        rate = rho
    rate = min(rate, 1.0 - 1e-12)
    tail = norms_arr[-1] * rate / (1.0 - rate)
    return PsiSeries(np.array(terms), norms_arr, len(terms) - 1, float(tail), rate)


def stability_beta(model, tol=1e-12):
    """Dependence functional ``sum_i (sum_j ||Psi_{i+j}||_2^2)^(1/2)``.

    The truncated double sum is completed with the geometric tail implied
    by the fitted decay rate of the Psi norms.
    """
    psi = psi_series(model, tol=tol)
    n = psi.norms
    r = psi.decay_rate
    r2 = r * r
    sq_tail = n[-1] ** 2 * r2 / (1.0 - r2)
    inner = np.cumsum((n ** 2)[::-1])[::-1] + sq_tail
    outer_tail = n[-1] * r / ((1.0 - r) * np.sqrt(1.0 - r2)) if r > 0 else 0.0
    return float(np.sum(np.sqrt(inner)) + outer_tail)


def population_cov(model, tol=1e-12):
    """Stationary covariances from the companion-form Lyapunov equation."""
    _check_stationary(model)
    p, m = model.p, model.M
    q = np.zeros((p * m, p * m))
    q[:m, :m] = model.noise_sigma ** 2 * np.eye(m)
    try:
        ups = lyapunov_solve(model.companion(), q, tol=tol * max(1.0, model.noise_sigma ** 2))
    except ConvergenceError as exc:
        raise UnstableModelError(str(exc)) from exc
    return PopulationCov(ups, ups[:m, :m].copy())


def _split_index(n, d_set):
    d_set = [int(c) for c in d_set]
    if not d_set or len(d_set) >= n:
        raise ValueError("column set must be a nonempty proper subset")
    if len(set(d_set)) != len(d_set) or min(d_set) < 0 or max(d_set) >= n:
        raise ValueError(f"invalid column set {d_set} for dimension {n}")
    mask = np.ones(n, dtype=bool)
    mask[d_set] = False
    return np.array(d_set), np.flatnonzero(mask)


def decorrelation_weights(cov, d_set):
    """``w* = (Ups[Dc, Dc])^{-1} Ups[Dc, D]``, shape ``(pM - d_m, d_m)``."""
    ups = cov.upsilon
    d, dc = _split_index(ups.shape[0], d_set)
    return solve_linear(ups[np.ix_(dc, dc)], ups[np.ix_(dc, d)])


def partial_covariance(cov, d_set):
    """Schur complement ``Ups[D,D] - Ups[D,Dc] w*``: the conditional
    covariance of the tested coordinates given the rest."""
    ups = cov.upsilon
    d, dc = _split_index(ups.shape[0], d_set)
    w = decorrelation_weights(cov, d_set)
    out = ups[np.ix_(d, d)] - ups[np.ix_(d, dc)] @ w
    return 0.5 * (out + out.T)


def sparsity_levels(model, cov, spec):
    """Row sparsities of ``A*`` (all rows) and of ``w*_m`` (tested rows)."""
    rho = [int(np.count_nonzero(row)) for row in model.stacked]
    s = [int(np.count_nonzero(np.abs(decorrelation_weights(cov, cols)) > ZERO_THRESHOLD))
         for _, cols in spec.entries]
    return rho, s


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class NoiseKind:
    """Noise law of each coordinate: ``gaussian`` (scale = sigma),
    ``uniform`` on ``(-scale, scale)`` or ``rademacher`` (+/- scale)."""

    kind: str = "gaussian"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform", "rademacher"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not self.scale > 0:
            raise ValueError("noise scale must be positive")

    @property
    def variance(self):
        if self.kind == "uniform":
            return self.scale ** 2 / 3.0
        return self.scale ** 2

    def draw(self, rng, shape):
        if self.kind == "gaussian":
            return self.scale * rng.standard_normal(shape)
        if self.kind == "uniform":
            return rng.uniform(-self.scale, self.scale, shape)
        return self.scale * (2.0 * rng.integers(0, 2, shape) - 1.0)


def build_lagged(series, p):
    """Lag vectors and responses from ``T + p`` consecutive observations."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 2:
        raise ValueError("series must be a 2-D array (time x nodes)")
    if series.shape[0] < p + 1:
        raise ValueError(f"need at least {p + 1} rows for lag order {p}, got {series.shape[0]}")
    if not np.all(np.isfinite(series)):
        raise ValueError("series has non-finite entries")
    n = series.shape[0] - p
    # row t of lag_vectors is (X_t, X_{t-1}, ..., X_{t-p+1}); X_t sits at series row t + p - 1
    lags = np.hstack([series[p - 1 - j:p - 1 - j + n] for j in range(p)])
    return LaggedSample(series, lags, series[p:].copy(), p)


def simulate(model, T, noise=None, burn_in=DEFAULT_BURN_IN, seed=0, keep_noise=False):
    """Simulate ``T`` transitions after ``burn_in`` discarded steps from zero.

    The generator is seeded with ``seed`` only, so identical arguments give
    identical samples.  With ``keep_noise`` the innovations driving each
    retained transition are stored on the sample (diagnostics only).
    """
    noise = NoiseKind() if noise is None else noise
    _check_stationary(model)
    p, m = model.p, model.M
    rng = np.random.default_rng(seed)
    total = burn_in + T + p
    eps = noise.draw(rng, (total, m))
    a = model.stacked
    x = np.zeros((total + p, m))
    lag = np.zeros(p * m)
    for t in range(total):
        nxt = a @ lag + eps[t]
        x[p + t] = nxt
        if p > 1:
            lag[m:] = lag[:-m]
        lag[:m] = nxt
    with np.errstate(over="ignore", invalid="ignore"):
        if not np.abs(x).max() < OVERFLOW_GUARD:
            raise UnstableModelError("simulated series overflowed; model is unstable")
    series = x[-(T + p):]
    sample = build_lagged(series, p)
    if keep_noise:
        sample.noise = eps[-T:].copy()
    return sample
