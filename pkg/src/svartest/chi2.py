"""Central and noncentral chi-square distribution functions.

Only the pieces consumed by the test machinery are provided: CDFs, the
upper tail and the central quantile.  Everything is computed from the
regularized incomplete gamma function, evaluated by its power series below
``a + 1`` and by a Lentz continued fraction above.
"""
import math

_EPS = 1e-15
_TINY = 1e-300
_MAX_ITER = 10_000


def _gamma_series(a, x):
    # P(a, x) for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cfrac(a, x):
    # Q(a, x) for x >= a + 1, modified Lentz
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_lower(a, x):
    """Regularized lower incomplete gamma function P(a, x)."""
    if x <= 0.0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cfrac(a, x)


def gammainc_upper(a, x):
    """Regularized upper incomplete gamma function Q(a, x) = 1 - P(a, x)."""
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cfrac(a, x)


def _check_df(df):
    if df <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")


def chi2_cdf(df, x):
    """CDF of the central chi-square law with ``df`` degrees of freedom."""
    _check_df(df)
    if not x > 0.0:
        return 0.0
    return gammainc_lower(0.5 * df, 0.5 * x)


def chi2_sf(df, x):
    """Upper tail ``1 - chi2_cdf(df, x)`` without cancellation."""
    _check_df(df)
    if not x > 0.0:
        return 1.0
    return gammainc_upper(0.5 * df, 0.5 * x)


def chi2_pdf(df, x):
    _check_df(df)
    if x <= 0.0:
        return 0.0
    k = 0.5 * df
    return math.exp((k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - math.lgamma(k))


def chi2_quantile(df, q):
    """Inverse of :func:`chi2_cdf`.

    Safeguarded Newton iteration inside a bisection bracket; the returned
    point satisfies ``|chi2_cdf(df, x) - q| <= 1e-9``.
    """
    _check_df(df)
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q}")
    lo, hi = 0.0, max(1.0, float(df))
    while chi2_cdf(df, hi) < q:
        lo, hi = hi, 2.0 * hi
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = chi2_cdf(df, x) - q
        if abs(f) <= 1e-13:
            return x
        if f > 0:
            hi = x
        else:
            lo = x
        dens = chi2_pdf(df, x)
        step = x - f / dens if dens > 0 else None
        x = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return x


def _poisson_weights(mean):
    """Yield ``(k, weight)`` pairs of a Poisson(mean) law, starting at the mode
    and spreading outwards until the unvisited mass falls below 1e-12."""
    mode = int(math.floor(mean))
    log_w_mode = -mean + mode * math.log(mean) - math.lgamma(mode + 1.0)
    w_mode = math.exp(log_w_mode)
    yield mode, w_mode
    covered = w_mode
    up_k, up_w = mode, w_mode
    down_k, down_w = mode, w_mode
    while 1.0 - covered > 1e-12:
        progressed = False
        up_k += 1
        up_w *= mean / up_k
        covered += up_w
        yield up_k, up_w
        progressed = up_w > 0.0
        if down_k > 0:
            down_w *= down_k / mean
            down_k -= 1
            covered += down_w
            yield down_k, down_w
            progressed = progressed or down_w > 0.0
        if not progressed:
            break


def noncentral_chi2_cdf(df, noncentrality, x):
    """CDF of the noncentral chi-square law as a Poisson mixture of central
    chi-square CDFs with ``df + 2k`` degrees of freedom."""
    _check_df(df)
    if noncentrality < 0.0:
        raise ValueError("noncentrality must be nonnegative")
    if 0.5 * noncentrality == 0.0:
        return chi2_cdf(df, x)
    if not x > 0.0:
        return 0.0
    total = 0.0
    for k, w in _poisson_weights(0.5 * noncentrality):
        total += w * chi2_cdf(df + 2 * k, x)
    return min(1.0, max(0.0, total))
