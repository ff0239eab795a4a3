"""Monte Carlo tails of the sample moments that drive the estimation bounds.

Three targets are supported, each reported on its natural scale so that the
upper quantiles should not drift with ``T``:

``quadratic_form``
    ``sqrt(T) * |(1/T) sum_t X_t' B X_t - tr(B Ups)|``
``deviation``
    ``sqrt(T / log M) * ||(1/T) sum_t eps_t X_t'||_max``
``cov_maxnorm``
    ``sqrt(T / log M) * ||(1/T) sum_t X_t X_t' - Ups||_max``
"""
import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import NoiseKind, population_cov, simulate

GRID_POINTS = 30
QUANTITIES = ("quadratic_form", "deviation", "cov_maxnorm")


@dataclass
class TailCurve:
    """Empirical survival function of a scaled statistic at one ``T``."""

    quantity: str
    T: int
    deltas: np.ndarray
    exceed_prob: np.ndarray
    reps: int
    statistics: np.ndarray

    def quantile(self, q):
        return float(np.quantile(self.statistics, q))


def delta_grid(stats, n=GRID_POINTS):
    """Log-spaced thresholds between the 1st and 99th percentiles."""
    lo, hi = np.percentile(stats, [1, 99])
    if hi <= 0:
        return np.geomspace(1e-3, 1.0, n)
    if lo <= 0 or lo >= hi:
        lo = hi * 1e-3
    return np.geomspace(lo, hi, n)


def tail_curve(quantity, T, stats):
    stats = np.asarray(stats, dtype=float)
    deltas = delta_grid(stats)
    exceed = (stats[None, :] > deltas[:, None]).mean(axis=1)
    return TailCurve(quantity, int(T), deltas, exceed, stats.size, stats)


def _check(model, noise, reps):
    if reps < 1:
        raise ValueError("reps must be >= 1")
    noise = NoiseKind() if noise is None else noise
    if not math.isclose(noise.variance, model.noise_sigma ** 2, rel_tol=1e-12):
        raise ValueError("noise variance does not match model.noise_sigma**2")
    return noise


def _one(args):
    quantity, model, noise, T, seed, B, ups, burn_in = args
    sample = simulate(model, T, noise, burn_in, seed, keep_noise=quantity == "deviation")
    x = sample.lag_vectors
    if quantity == "quadratic_form":
        val = np.einsum("ti,ij,tj->", x, B, x) / T - np.trace(B @ ups)
        return math.sqrt(T) * abs(val)
    scale = math.sqrt(T / math.log(model.M))
    if quantity == "deviation":
        return scale * np.abs(sample.noise.T @ x / T).max()
    return scale * np.abs(x.T @ x / T - ups).max()


def _run(quantity, model, T_list, reps, seed, noise, B=None, workers=1, burn_in=1000):
    noise = _check(model, noise, reps)
    ups = population_cov(model).upsilon
    curves = []
    for T in T_list:
        args = [(quantity, model, noise, int(T),
                 np.random.SeedSequence(seed, spawn_key=(QUANTITIES.index(quantity), int(T), r)),
                 B, ups, burn_in) for r in range(reps)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                stats = list(pool.map(_one, args, chunksize=max(1, reps // (4 * workers))))
        else:
            stats = [_one(a) for a in args]
        curves.append(tail_curve(quantity, T, stats))
    return curves


def quadratic_form_tail(model, B, T, reps, seed=0, noise=None, workers=1):
    """Tail of ``sqrt(T) |(1/T) sum X_t' B X_t - tr(B Ups)|`` for symmetric ``B``."""
    B = np.asarray(B, dtype=float)
    q = model.p * model.M
    if B.shape != (q, q):
        raise ValueError(f"B must be {q}x{q}, got {B.shape}")
    if not np.array_equal(B, B.T):
        raise ValueError("B must be symmetric")
    return _run("quadratic_form", model, [T], reps, seed, noise, B, workers)[0]


def deviation_tail(model, T_list, reps, seed=0, noise=None, workers=1):
    """Tails of the scaled noise / lag-vector cross moment, one per ``T``."""
    return _run("deviation", model, T_list, reps, seed, noise, workers=workers)


def cov_maxnorm_tail(model, T_list, reps, seed=0, noise=None, workers=1):
    """Tails of the scaled covariance max-norm deviation, one per ``T``."""
    return _run("cov_maxnorm", model, T_list, reps, seed, noise, workers=workers)


def quantile_slope(curves, q=0.99):
    """Least-squares slope of ``log quantile`` on ``log T`` with a 95% interval.

    Returns ``(slope, lo, hi)``; the interval uses bootstrap resampling of
    the replicates within each curve.
    """
    logT = np.log([c.T for c in curves])
    logq = np.log([c.quantile(q) for c in curves])
    slope = float(np.polyfit(logT, logq, 1)[0])
    rng = np.random.default_rng(0)
    boots = []
    for _ in range(400):
        lq = [math.log(np.quantile(rng.choice(c.statistics, c.statistics.size), q)) for c in curves]
        boots.append(np.polyfit(logT, lq, 1)[0])
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return slope, float(lo), float(hi)


def emit_curves_csv(curves, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["quantity", "T", "delta", "exceed_prob", "reps"])
        for c in curves:
            for d, e in zip(c.deltas, c.exceed_prob):
                writer.writerow([c.quantity, c.T, format(float(d), ".17g"),
                                 format(float(e), ".17g"), c.reps])
