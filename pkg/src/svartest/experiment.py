"""Replicated null / local-alternative experiments and rejection-rate tables.

Every random draw is derived positionally from ``master_seed`` through
``numpy.random.SeedSequence`` spawn keys, so a replicate's result does not
depend on which worker ran it or in what order.
"""
import csv
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional

import numpy as np
import yaml

from . import graphs
from .estimators import METHODS, fit
from .linalg import ConvergenceError
from .model import NoiseKind, TestSpec, VarModel, decorrelation_weights, population_cov, simulate
from .score import (
    DegenerateFitError,
    decorrelated_score,
    noncentrality,
    statistic_r_hat,
    statistic_u_hat,
    statistic_u_tilde,
)

DEFAULT_PAIRS = ((1, 3), (1, 5), (3, 3), (3, 4), (5, 4), (5, 8))
STATISTIC_NAMES = ("U_tilde", "R_hat", "U_hat")
CSV_COLUMNS = ("graph", "M", "T", "rho", "phi", "statistic", "rejection_rate", "reps", "mc_stderr")
MAX_FAILURE_FRACTION = 0.05
WORKERS_ENV = "SVARTEST_WORKERS"

# stream tags for SeedSequence spawn keys
_GRAPH_STREAM, _REPLICATE_STREAM, _DELTA_STREAM = 0, 1, 2


class ConfigError(ValueError):
    """Invalid experiment configuration; ``problems`` lists every violation."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid experiment config:\n  " + "\n  ".join(self.problems))


class CellAbortedWarning(RuntimeWarning):
    pass


@dataclass
class ExperimentConfig:
    """One experiment: a grid of (M, T, hypothesis) cells.

    ``spec`` holds 1-based ``(row, column)`` pairs.  ``hypothesis`` is
    ``"null"`` or a mapping ``{phi: [...], delta_seed: int, delta_norm: float}``;
    under the alternative ``delta`` is scaled so that the noncentrality
    ``||Delta_tilde||^2`` equals ``delta_norm**2``.
    """

    graph: str = "random"
    rho: int = 2
    norm_target: float = graphs.NORM_TARGET
    M_list: List[int] = field(default_factory=lambda: [30])
    T_list: List[int] = field(default_factory=lambda: [1000])
    p: int = 1
    spec: List[List[int]] = field(default_factory=lambda: [list(x) for x in DEFAULT_PAIRS])
    hypothesis: object = "null"
    reps: int = 500
    noise: Dict[str, object] = field(default_factory=lambda: {"kind": "uniform", "scale": 1.0})
    statistics: List[str] = field(default_factory=lambda: ["U_tilde", "R_hat"])
    method: str = "lasso"
    tuning: str = "cv"
    lambda_const: float = 2.0
    alpha: float = 0.05
    burn_in: int = 1000
    master_seed: int = 0

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        problems = [f"unknown key {k!r}" for k in data if k not in known]
        cfg = cls(**{k: v for k, v in data.items() if k in known})
        problems += cfg.problems()
        if problems:
            raise ConfigError(problems)
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            data = yaml.safe_load(fh)
        if not isinstance(data, dict):
            raise ConfigError([f"{path}: top level must be a mapping"])
        return cls.from_dict(data)

    def problems(self):
        """Every schema violation, not just the first."""
        out = []
        if self.graph not in ("block", "chain", "random"):
            out.append(f"graph must be block, chain or random, got {self.graph!r}")
        if not _is_int_list(self.M_list):
            out.append("M_list must be a nonempty list of positive integers")
        if not _is_int_list(self.T_list):
            out.append("T_list must be a nonempty list of positive integers")
        if not (isinstance(self.reps, int) and self.reps >= 1):
            out.append("reps must be an integer >= 1")
        if not (isinstance(self.p, int) and self.p >= 1):
            out.append("p must be an integer >= 1")
        if not (isinstance(self.rho, int) and self.rho >= 1):
            out.append("rho must be an integer >= 1")
        if not 0 < self.norm_target < 1:
            out.append("norm_target must lie in (0, 1)")
        if not 0 < self.alpha < 1:
            out.append("alpha must lie in (0, 1)")
        if self.method not in METHODS:
            out.append(f"method must be one of {METHODS}")
        if self.tuning not in ("cv", "fixed"):
            out.append("tuning must be cv or fixed")
        if not (isinstance(self.burn_in, int) and self.burn_in >= 0):
            out.append("burn_in must be a nonnegative integer")
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            out.append("master_seed must be a nonnegative integer")
        bad = [s for s in self.statistics if s not in STATISTIC_NAMES] if isinstance(
            self.statistics, list) else ["?"]
        if bad or not self.statistics:
            out.append(f"statistics must be a nonempty subset of {STATISTIC_NAMES}")
        try:
            self.noise_kind()
        except (TypeError, ValueError) as exc:
            out.append(f"noise: {exc}")
        try:
            spec = self.test_spec()
            if _is_int_list(self.M_list) and isinstance(self.p, int):
                for M in self.M_list:
                    try:
                        spec.validate(M, self.p)
                    except (IndexError, ValueError) as exc:
                        out.append(f"spec invalid for M={M}: {exc}")
        except (TypeError, ValueError) as exc:
            out.append(f"spec: {exc}")
        if self.hypothesis not in (None, "null"):
            h = self.hypothesis
            if not isinstance(h, dict) or "phi" not in h:
                out.append("hypothesis must be 'null' or a mapping with a phi entry")
            else:
                unknown = set(h) - {"phi", "delta_seed", "delta_norm"}
                if unknown:
                    out.append(f"unknown hypothesis keys {sorted(unknown)}")
                if not all(isinstance(v, (int, float)) and v > 0 for v in self.phi_list()):
                    out.append("phi values must be positive numbers")
                if not h.get("delta_norm", 1.0) > 0:
                    out.append("delta_norm must be positive")
        if self.graph == "block" and _is_int_list(self.M_list) and any(m % 2 for m in self.M_list):
            out.append("block graph needs even M")
        return out

    def noise_kind(self):
        return NoiseKind(str(self.noise.get("kind", "gaussian")), float(self.noise.get("scale", 1.0)))

    def test_spec(self):
        pairs = [tuple(int(v) for v in pair) for pair in self.spec]
        if any(len(pair) != 2 for pair in pairs):
            raise ValueError("spec entries must be [row, column] pairs")
        return TestSpec.from_pairs(pairs, alpha=self.alpha, one_based=True)

    @property
    def is_null(self):
        return self.hypothesis in (None, "null")

    def phi_list(self):
        if self.is_null:
            return [None]
        phi = self.hypothesis["phi"]
        return list(phi) if isinstance(phi, (list, tuple)) else [phi]


def _is_int_list(v):
    return isinstance(v, list) and len(v) > 0 and all(isinstance(x, int) and x > 0 for x in v)


@dataclass(frozen=True)
class RateRow:
    graph: str
    M: object  # int, or "avg" for the average over M
    T: int
    rho: int
    phi: object  # float, or "null"
    statistic: str
    rejection_rate: float
    reps: int
    mc_stderr: float
    failures: int = 0

    def sort_key(self):
        return (self.graph, math.inf if self.M == "avg" else self.M, self.T, self.rho,
                -1.0 if self.phi == "null" else self.phi, self.statistic)


@dataclass
class RateTable:
    """Rejection rates per cell; ``values`` keeps the raw statistic values
    per ``(M, T, phi, statistic)`` for distributional checks."""

    rows: List[RateRow] = field(default_factory=list)
    values: Dict[tuple, np.ndarray] = field(default_factory=dict)
    noncentrality: Dict[int, float] = field(default_factory=dict)

    def sorted_rows(self):
        return sorted(self.rows, key=RateRow.sort_key)

    def lookup(self, M, T, phi, statistic):
        for row in self.rows:
            if (row.M, row.T, row.phi, row.statistic) == (M, T, phi, statistic):
                return row
        raise KeyError((M, T, phi, statistic))


def mc_stderr(rate, reps):
    return math.sqrt(rate * (1.0 - rate) / reps) if reps > 0 else math.nan


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def emit_csv(table, path):
    """Write the table with a fixed header and deterministic row order."""
    rows = table.sorted_rows()
    with_failures = any(r.failures for r in rows)
    header = list(CSV_COLUMNS) + (["failures"] if with_failures else [])
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for r in rows:
                rec = [r.graph, r.M, r.T, r.rho, r.phi, r.statistic, r.rejection_rate, r.reps,
                       r.mc_stderr]
                if with_failures:
                    rec.append(r.failures)
                writer.writerow([_fmt(v) for v in rec])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(RateRow(
                rec["graph"],
                rec["M"] if rec["M"] == "avg" else int(rec["M"]),
                int(rec["T"]),
                int(rec["rho"]),
                rec["phi"] if rec["phi"] == "null" else float(rec["phi"]),
                rec["statistic"],
                float(rec["rejection_rate"]),
                int(rec["reps"]),
                float(rec["mc_stderr"]),
                int(rec.get("failures") or 0),
            ))
    return RateTable(rows)


# ---------------------------------------------------------------------------
# replicate work


@dataclass(frozen=True)
class _Task:
    stacked: np.ndarray
    p: int
    noise: NoiseKind
    T: int
    burn_in: int
    seed: np.random.SeedSequence
    spec: TestSpec
    statistics: tuple
    method: str
    tuning: str
    lambda_const: float


def _run_replicate(task):
    """Statistic values for one replicate, or the failure message."""
    noise = task.noise
    model = VarModel.from_stacked(task.stacked, task.p, math.sqrt(noise.variance))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sample = simulate(model, task.T, noise, task.burn_in, task.seed)
            res = fit(sample, task.spec, task.method, task.tuning, task.lambda_const)
            parts = decorrelated_score(sample, res, task.spec)
            out = {}
            for name in task.statistics:
                if name == "U_tilde":
                    out[name] = statistic_u_tilde(parts, res, task.spec)
                elif name == "R_hat":
                    out[name] = statistic_r_hat(parts, res, task.spec)
                else:
                    out[name] = statistic_u_hat(parts, res, task.spec, noise.variance)
    except (DegenerateFitError, ConvergenceError, ArithmeticError, ValueError) as exc:
        return f"{type(exc).__name__}: {exc}"
    return {k: (r.value, r.reject) for k, r in out.items()}


def resolve_workers(workers=None):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return workers


def _map(tasks, workers, progress=None):
    if workers == 1:
        out = []
        for i, t in enumerate(tasks):
            out.append(_run_replicate(t))
            if progress:
                progress(i + 1, len(tasks))
        return out
    chunk = max(1, len(tasks) // (8 * workers))
    out = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for i, r in enumerate(pool.map(_run_replicate, tasks, chunksize=chunk)):
            out.append(r)
            if progress:
                progress(i + 1, len(tasks))
    return out


def graph_for(cfg, M):
    seed = np.random.SeedSequence(cfg.master_seed, spawn_key=(_GRAPH_STREAM, M))
    A = graphs.make_graph(cfg.graph, M, cfg.rho, cfg.norm_target, seed)
    if cfg.p > 1:
        # higher lags are left empty; the graph drives the first lag only
        A = np.hstack([A, np.zeros((M, (cfg.p - 1) * M))])
    return A


def alternative_direction(cfg, model, spec):
    """Gaussian direction drawn once from ``delta_seed``, scaled so that its
    noncentrality under ``model`` is ``delta_norm**2``."""
    h = cfg.hypothesis
    seed = np.random.SeedSequence(int(h.get("delta_seed", cfg.master_seed)),
                                  spawn_key=(_DELTA_STREAM,))
    z = np.random.default_rng(seed).standard_normal(spec.d)
    nc = noncentrality(model, population_cov(model), spec, z)
    return z * (float(h.get("delta_norm", 1.0)) / math.sqrt(nc))


def run_experiment(cfg, workers=None, progress=None):
    """Run every cell of ``cfg`` and return the rejection-rate table.

    The null values handed to the tests are always the unperturbed
    ``A_D``, so null cells measure false positives and alternative cells
    measure power.
    """
    if cfg.problems():
        raise ConfigError(cfg.problems())
    workers = resolve_workers(workers)
    noise = cfg.noise_kind()
    base_spec = cfg.test_spec()
    stats = tuple(cfg.statistics)
    table = RateTable()

    cells, tasks = [], []
    for M in cfg.M_list:
        A = graph_for(cfg, M)
        rho = graphs.row_sparsity(A)
        spec = base_spec.with_null(base_spec.extract(A))
        model = VarModel.from_stacked(A, cfg.p, math.sqrt(noise.variance))
        delta = None if cfg.is_null else alternative_direction(cfg, model, spec)
        if delta is not None:
            table.noncentrality[M] = cfg.hypothesis.get("delta_norm", 1.0) ** 2
        for T in cfg.T_list:
            for h, phi in enumerate(cfg.phi_list()):
                if phi is None:
                    A_true = A
                else:
                    A_true, used, halvings = graphs.perturb(A, spec, delta, phi, T, cfg.p)
                    if halvings:
                        table.noncentrality[M] = None
                start = len(tasks)
                for r in range(cfg.reps):
                    seed = np.random.SeedSequence(cfg.master_seed,
                                                  spawn_key=(_REPLICATE_STREAM, M, T, h, r))
                    tasks.append(_Task(A_true, cfg.p, noise, T, cfg.burn_in, seed, spec, stats,
                                       cfg.method, cfg.tuning, cfg.lambda_const))
                cells.append((M, T, "null" if phi is None else float(phi), rho, start))

    results = _map(tasks, workers, progress)

    for M, T, phi, rho, start in cells:
        chunk = results[start:start + cfg.reps]
        ok = [r for r in chunk if isinstance(r, dict)]
        failures = len(chunk) - len(ok)
        aborted = failures > MAX_FAILURE_FRACTION * cfg.reps
        if aborted:
            warnings.warn(f"cell M={M} T={T} phi={phi} aborted: {failures} of {cfg.reps} "
                          f"replicates failed", CellAbortedWarning, stacklevel=2)
        for name in stats:
            vals = np.array([r[name][0] for r in ok])
            rej = np.array([r[name][1] for r in ok], dtype=bool)
            table.values[(M, T, phi, name)] = vals
            n = len(ok)
            rate = math.nan if aborted or n == 0 else float(rej.mean())
            table.rows.append(RateRow(cfg.graph, M, T, rho, phi, name, rate, n,
                                      mc_stderr(rate, n) if not math.isnan(rate) else math.nan,
                                      failures))

    if len(cfg.M_list) > 1:
        table.rows.extend(_average_over_M(table.rows, cfg.graph))
    table.rows = table.sorted_rows()
    return table


def _average_over_M(rows, graph):
    groups = {}
    for r in rows:
        groups.setdefault((r.T, r.phi, r.statistic), []).append(r)
    out = []
    for (T, phi, name), members in groups.items():
        rates = np.array([m.rejection_rate for m in members])
        ses = np.array([m.mc_stderr for m in members])
        out.append(RateRow(graph, "avg", T, max(m.rho for m in members), phi, name,
                           float(rates.mean()), int(sum(m.reps for m in members)),
                           float(np.sqrt((ses ** 2).sum()) / len(members)),
                           int(sum(m.failures for m in members))))
    return out


# ---------------------------------------------------------------------------
# estimation error study


def estimation_errors(A, spec, T, reps, method="lasso", noise=None, tuning="fixed",
                      lambda_const=2.0, seed=0, p=1, burn_in=1000):
    """Per-replicate estimation errors over the tested rows.

    Returns ``(a_err, w_err)``: the mean over tested rows of
    ``||A_hat_m - A_m||_2`` and of ``||w_hat_m - w*_m||_1`` (entrywise).
    """
    noise = NoiseKind("uniform", 1.0) if noise is None else noise
    model = VarModel.from_stacked(A, p, math.sqrt(noise.variance))
    cov = population_cov(model)
    w_true = [decorrelation_weights(cov, cols) for _, cols in spec.entries]
    a_err, w_err = np.empty(reps), np.empty(reps)
    stacked = model.stacked
    for r in range(reps):
        ss = np.random.SeedSequence(seed, spawn_key=(_REPLICATE_STREAM, T, r))
        sample = simulate(model, T, noise, burn_in, ss)
        res = fit(sample, spec, method, tuning, lambda_const)
        a_err[r] = np.mean([np.linalg.norm(res.a_hat[m] - stacked[m]) for m in spec.rows])
        w_err[r] = np.mean([np.abs(wh - wt).sum() for wh, wt in zip(res.w_hat, w_true)])
    return a_err, w_err
