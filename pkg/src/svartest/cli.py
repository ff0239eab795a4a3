"""Command-line interface: ``svartest {simulate,estimate,test,experiment,concentration}``.

Exit status: 0 success, 1 parse / input error, 2 unstable model,
3 dimension mismatch, 4 numerical failure, 64 usage error.
"""
import argparse
import json
import os
import sys

import numpy as np
import yaml

from . import concentration, experiment
from .dantzig import InfeasibleError, SimplexError
from .estimators import METHODS, fit
from .io import ParseError, parse_spec, read_model, read_series, write_model, write_series
from .linalg import ConvergenceError, SingularMatrixError
from .model import NoiseKind, UnstableModelError, VarModel, build_lagged, simulate
from .score import (
    DegenerateFitError,
    decorrelated_score,
    statistic_r_hat,
    statistic_u_hat,
    statistic_u_tilde,
)

EXIT_OK, EXIT_PARSE, EXIT_UNSTABLE, EXIT_DIMENSION, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2, 3, 4, 64

STATISTIC_FLAGS = {"u-tilde": "U_tilde", "r-hat": "R_hat", "u-hat": "U_hat"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _g17(x):
    return format(float(x), ".17g")


def _need_file(path, flag):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{flag}: no such file {path!r}")


def _need_out(path, flag="--out"):
    d = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(d):
        raise FileNotFoundError(f"{flag}: directory {d!r} does not exist")


def _noise(args, default_scale):
    scale = default_scale if args.noise_scale is None else args.noise_scale
    return NoiseKind(args.noise, scale)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    _need_file(args.model, "--model")
    _need_out(args.out)
    model = read_model(args.model)
    noise = _noise(args, model.noise_sigma)
    sample = simulate(model, args.T, noise, args.burn_in, args.seed)
    write_series(sample.series[-args.T:], args.out)
    return EXIT_OK


def _load_sample(args):
    _need_file(args.series, "--series")
    series = read_series(args.series)
    return build_lagged(series, args.p)


def _spec_and_null(args, M):
    if not 0.0 < args.alpha < 1.0:
        raise UsageError(f"--alpha must lie in (0, 1), got {args.alpha}")
    spec, has_values = parse_spec(args.spec, args.alpha)
    spec.validate(M, args.p)
    if args.model:
        if has_values:
            raise UsageError("give null values either in --spec or through --model, not both")
        _need_file(args.model, "--model")
        model = read_model(args.model)
        if model.M != M or model.p != args.p:
            raise IndexError(f"model is p={model.p}, M={model.M}; series gives p={args.p}, M={M}")
        spec = spec.with_null(spec.extract(model.stacked))
    return spec


def cmd_estimate(args):
    _need_out(args.out)
    sample = _load_sample(args)
    spec = _spec_and_null(args, sample.M)
    res = fit(sample, spec, args.method, args.tuning, args.lambda_const)
    write_model(VarModel.from_stacked(res.a_hat, sample.p, np.sqrt(res.sigma2_hat)), args.out)
    print(f"lambda_A={res.lambda_a:.6g} lambda_w=" + ",".join(f"{v:.6g}" for v in res.lambda_w)
          + f" sigma2_hat={res.sigma2_hat:.6g}")
    return EXIT_OK


def cmd_test(args):
    if args.out:
        _need_out(args.out)
    sample = _load_sample(args)
    spec = _spec_and_null(args, sample.M)
    kind = STATISTIC_FLAGS[args.statistic]
    if kind == "U_hat" and args.sigma2 is None:
        raise UsageError("--statistic u-hat needs --sigma2")
    if args.sigma2 is not None and not args.sigma2 > 0:
        raise UsageError("--sigma2 must be positive")
    res = fit(sample, spec, args.method, args.tuning, args.lambda_const)
    parts = decorrelated_score(sample, res, spec)
    if kind == "U_tilde":
        report = statistic_u_tilde(parts, res, spec)
    elif kind == "R_hat":
        report = statistic_r_hat(parts, res, spec, args.sigma2)
    else:
        report = statistic_u_hat(parts, res, spec, args.sigma2)
    print(report.summary())
    if args.out:
        payload = {
            "statistic": report.statistic_kind,
            "value": _g17(report.value),
            "df": report.df,
            "p_value": _g17(report.p_value),
            "reject": report.reject,
            "alpha": _g17(report.alpha),
            "sigma2_used": _g17(report.sigma2_used),
            "method": args.method,
            "tuning": args.tuning,
            "lambda_A": _g17(res.lambda_a),
            "lambda_w": [_g17(v) for v in res.lambda_w],
            "T": sample.T,
            "M": sample.M,
            "p": sample.p,
            "spec": [[m + 1, c + 1] for m, c in spec.pairs()],
            "null_values": [_g17(v) for v in spec.null_values],
        }
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def cmd_experiment(args):
    _need_file(args.config, "--config")
    _need_out(args.out)
    cfg = experiment.ExperimentConfig.load(args.config)
    workers = experiment.resolve_workers(args.workers)
    step = max(1, (cfg.reps * len(cfg.M_list) * len(cfg.T_list) * len(cfg.phi_list())) // 20)

    def progress(done, total):
        if done % step == 0 or done == total:
            print(f"replicates {done}/{total}", file=sys.stderr)

    table = experiment.run_experiment(cfg, workers, None if args.quiet else progress)
    experiment.emit_csv(table, args.out)
    for row in table.rows:
        print(f"{row.graph} M={row.M} T={row.T} phi={row.phi} {row.statistic}: "
              f"rate={row.rejection_rate:.6g} (se {row.mc_stderr:.6g}, reps {row.reps})")
    return EXIT_OK


def cmd_concentration(args):
    _need_file(args.model, "--model")
    _need_out(args.out)
    model = read_model(args.model)
    noise = _noise(args, model.noise_sigma)
    # the population covariance uses model.noise_sigma, so keep them consistent
    model = VarModel(model.coeffs, np.sqrt(noise.variance))
    workers = experiment.resolve_workers(args.workers)
    curves = []
    for quantity in args.quantity:
        if quantity == "quadratic_form":
            B = np.eye(model.p * model.M) / (model.p * model.M)
            curves += [concentration.quadratic_form_tail(model, B, T, args.reps, args.seed, noise,
                                                         workers) for T in args.T]
        elif quantity == "deviation":
            curves += concentration.deviation_tail(model, args.T, args.reps, args.seed, noise, workers)
        else:
            curves += concentration.cov_maxnorm_tail(model, args.T, args.reps, args.seed, noise,
                                                     workers)
    concentration.emit_curves_csv(curves, args.out)
    for c in curves:
        print(f"{c.quantity} T={c.T}: q99={c.quantile(0.99):.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_noise(p):
    p.add_argument("--noise", choices=["gaussian", "uniform", "rademacher"], default="gaussian")
    p.add_argument("--noise-scale", type=float, default=None,
                   help="noise scale (default: the model's noise_sigma)")


def _add_fit(p):
    p.add_argument("--series", required=True)
    p.add_argument("--p", type=int, default=1, help="lag order")
    p.add_argument("--spec", required=True, help='1-based, e.g. "1:3,5;3:3,4"')
    p.add_argument("--model", help="take null values from this model file")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--method", choices=METHODS, default="lasso")
    p.add_argument("--tuning", choices=["cv", "fixed"], default="cv")
    p.add_argument("--lambda-const", type=float, default=2.0)


def build_parser():
    parser = _Parser(prog="svartest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a series from a model file")
    s.add_argument("--model", required=True)
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--burn-in", type=int, default=1000)
    s.add_argument("--out", required=True)
    _add_noise(s)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="fit A and write it as a model file")
    _add_fit(e)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_estimate)

    t = sub.add_parser("test", help="score test of the entries in --spec")
    _add_fit(t)
    t.add_argument("--statistic", choices=list(STATISTIC_FLAGS), default="u-tilde")
    t.add_argument("--sigma2", type=float, default=None, help="known noise variance")
    t.add_argument("--out", help="write a JSON report")
    t.set_defaults(func=cmd_test)

    x = sub.add_parser("experiment", help="run a Monte Carlo experiment from a YAML config")
    x.add_argument("--config", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default ${experiment.WORKERS_ENV} or 1)")
    x.add_argument("--quiet", action="store_true")
    x.set_defaults(func=cmd_experiment)

    c = sub.add_parser("concentration", help="tail curves of the sample moment deviations")
    c.add_argument("--model", required=True)
    c.add_argument("--T", type=int, nargs="+", default=[250, 1000, 4000])
    c.add_argument("--reps", type=int, default=300)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--quantity", nargs="+", choices=list(concentration.QUANTITIES),
                   default=list(concentration.QUANTITIES))
    c.add_argument("--workers", type=int, default=None)
    c.add_argument("--out", required=True)
    _add_noise(c)
    c.set_defaults(func=cmd_concentration)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"svartest: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnstableModelError as exc:
        print(f"svartest: unstable model: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except IndexError as exc:
        print(f"svartest: dimension error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except (DegenerateFitError, SingularMatrixError, ConvergenceError, SimplexError,
            InfeasibleError, ArithmeticError) as exc:
        print(f"svartest: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ParseError, experiment.ConfigError, yaml.YAMLError, FileNotFoundError, OSError) as exc:
        print(f"svartest: input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        # remaining value errors come from inconsistent arguments
        print(f"svartest: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
