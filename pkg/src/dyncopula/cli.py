"""Command-line front end.

Subcommands write CSV to ``--out`` (or standard output). Exit status is 0 on
success, 2 for invalid configuration or input and 3 for numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import math
import os
import sys
import warnings

from .copula import CorrelationPath, build_schedule, sample_normal_scores
from .exceptions import ConfigError, ConvergenceError, NumericalError
from .experiments import (
    SUMMARY_COLUMNS,
    read_paired_sample,
    read_tabulated_path,
    replicate_table,
    write_csv,
)
from .limits import HUSLER_REISS, REGIMES, LimitLaw, MaximaExperiment, empirical_maxima_cdf
from .limits import limit_cdf, tail_coefficient, tail_dependence_fn
from .mathcore import RngStream, std_normal_cdf
from .nonparametric import (
    EPANECHNIKOV,
    fit_m_curve,
    optimal_bandwidth,
    pilot_second_derivative,
    practical_bandwidth,
)
from .parametric import (
    ESTIMATORS,
    IdentifiabilityWarning,
    asymptotic_report,
    constancy_test,
    fit_constant,
    fit_linear,
    fit_power,
    hotelling_test,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

FAMILY_NAMES = {"const": "constant", "constant": "constant", "linear": "linear", "power": "power"}


# ---------------------------------------------------------------------------
# argument parsing helpers


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text: str) -> list[float]:
    """``start:stop:step`` (inclusive stop) or a comma-separated list."""
    text = str(text)
    if ":" in text:
        try:
            start, stop, step = (float(t) for t in text.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"grid must be start:stop:step, got {text!r}") from None
        if not step > 0 or stop < start:
            raise argparse.ArgumentTypeError(f"invalid grid range {text!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        # round to the step's decimals so 0.1:0.9:0.01 gives 0.1, 0.11, ...
        decimals = max(0, -int(math.floor(math.log10(step))) + 2)
        return [round(start + k * step, decimals) for k in range(count)]
    return _float_list(text)


def _add_path_args(p, required=False):
    p.add_argument("--path", required=required, default=None if required else "const",
                   help="const, linear, power or table:<file with columns s,m>")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=1.0)


def _path_from_args(args) -> CorrelationPath:
    spec = args.path
    if spec.startswith("table:"):
        return read_tabulated_path(spec[len("table:"):])
    family = FAMILY_NAMES.get(spec)
    if family == "constant":
        return CorrelationPath.constant(args.alpha)
    if family == "linear":
        return CorrelationPath.linear(args.alpha, args.beta)
    if family == "power":
        return CorrelationPath.power(args.alpha, args.beta, args.gamma)
    raise ConfigError(f"--path: unknown path {spec!r}; use const, linear, power or table:<file>")


def _family_from_args(args) -> str:
    family = FAMILY_NAMES.get(args.path)
    if family is None:
        raise ConfigError(f"--path: fitting needs const, linear or power, got {args.path!r}")
    return family


def _check_positive(name, value):
    if value is not None and value < 1:
        raise ConfigError(f"--{name} must be >= 1, got {value}")


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
        return
    # write through a buffer so a failed command leaves no partial file
    buf = io.StringIO()
    yield buf
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise ConfigError(f"--out: cannot write {path}: {exc.strerror}") from None


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    if args.n < 2:
        raise ConfigError(f"--n must be >= 2, got {args.n}")
    path = _path_from_args(args)
    schedule = build_schedule(path, args.n)
    x, y = sample_normal_scores(schedule, RngStream(args.seed, 0))
    u, v = std_normal_cdf(x), std_normal_cdf(y)
    rows = [{"i": i + 1, "u": u[i], "v": v[i]} for i in range(args.n)]
    meta = {"path": path.describe(), "n": args.n, "seed": args.seed}
    with _output(args.out) as out:
        write_csv(out, rows, ("i", "u", "v"), meta)
    return EXIT_OK


def _fit_family(sample, family, estimator):
    if family == "constant":
        return fit_constant(sample, estimator)
    if family == "linear":
        return fit_linear(sample, estimator)
    return fit_power(sample, estimator)


def _fit_with_diagnostics(sample, family, estimator):
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", IdentifiabilityWarning)
            fit = _fit_family(sample, family, estimator)
    except ConvergenceError as exc:
        if exc.best is not None:
            b = exc.best
            print(f"best iterate: alpha={b.alpha!r} beta={b.beta!r} gamma={b.gamma!r} "
                  f"residual_norm={b.residual_norm!r}", file=sys.stderr)
        raise
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return fit


def _human_report(fit, report, extra) -> str:
    lines = [f"{fit.family} fit ({fit.estimator}), n={fit.n}"]
    lines.append(f"  alpha = {fit.alpha:.6g}")
    if fit.family != "constant":
        lines.append(f"  beta  = {fit.beta:.6g}")
    if fit.family == "power":
        lines.append(f"  gamma = {fit.gamma:.6g}")
    lines.append(f"  residual norm = {fit.residual_norm:.3g}, converged = {fit.converged}")
    if report is not None:
        lines.append("  limit covariance Sigma:")
        for row in report.Sigma:
            lines.append("    " + "  ".join(f"{v: .6g}" for v in row))
    for key, value in extra.items():
        lines.append(f"  {key} = {value:.6g}" if isinstance(value, float) else f"  {key} = {value}")
    return "\n".join(lines)


def _null_theta(args, family):
    theta = [args.null_alpha, args.null_beta, args.null_gamma]
    size = {"constant": 1, "linear": 2, "power": 3}[family]
    if any(t is None for t in theta[:size]):
        raise ConfigError("--null-alpha/--null-beta/--null-gamma are required for the free parameters")
    return theta[:size]


def cmd_fit_param(args) -> int:
    family = _family_from_args(args)
    sample = read_paired_sample(args.input)
    fit = _fit_with_diagnostics(sample, family, args.estimator)
    row = fit.to_row()
    report = asymptotic_report(fit) if fit.converged else None
    if report is not None:
        row.update({k: v for k, v in report.to_row().items() if k not in row})
    extra = {}
    if args.hotelling:
        if report is None:
            raise NumericalError("fit did not converge; cannot run the Hotelling test")
        res = hotelling_test(fit, report, _null_theta(args, family))
        extra.update({"hotelling_statistic": res.statistic, "hotelling_dof": res.dof,
                      "hotelling_p_value": res.p_value})
    if args.constancy:
        res = constancy_test(sample, args.estimator)
        extra.update({"constancy_statistic": res.statistic, "constancy_p_value": res.p_value})
    row.update(extra)
    with _output(args.out) as out:
        write_csv(out, [row], list(row), {"input": os.path.basename(args.input)})
    stream = sys.stderr if args.out in (None, "-") else sys.stdout
    print(_human_report(fit, report, extra), file=stream)
    return EXIT_OK


def cmd_test(args) -> int:
    family = _family_from_args(args)
    sample = read_paired_sample(args.input)
    rows = []
    if args.kind in ("hotelling", "both"):
        fit = _fit_with_diagnostics(sample, family, args.estimator)
        if not fit.converged:
            raise NumericalError("fit did not converge; cannot run the Hotelling test")
        res = hotelling_test(fit, asymptotic_report(fit), _null_theta(args, family))
        rows.append({"test": "hotelling", "statistic": res.statistic, "dof": res.dof,
                     "p_value": res.p_value, "null": res.null_description})
    if args.kind in ("constancy", "both"):
        res = constancy_test(sample, args.estimator)
        rows.append({"test": "constancy", "statistic": res.statistic, "dof": res.dof,
                     "p_value": res.p_value, "null": res.null_description})
    with _output(args.out) as out:
        write_csv(out, rows, ("test", "statistic", "dof", "p_value", "null"),
                  {"input": os.path.basename(args.input), "estimator": args.estimator})
    return EXIT_OK


def _curve_filename(out, d):
    root, ext = os.path.splitext(out)
    return f"{root}_d{d}{ext or '.csv'}"


def cmd_fit_nonparam(args) -> int:
    sample = read_paired_sample(args.input)
    n = sample.n
    if n < 10:
        raise ConfigError(f"curve fitting needs at least 10 rows, got {n}")
    if args.d == "auto":
        curvature = pilot_second_derivative(sample)
        settings = [("auto", optimal_bandwidth(curvature, n, EPANECHNIKOV, args.route))]
    else:
        settings = [(d, practical_bandwidth(n, d)) for d in _float_list(args.d)]
        if not settings:
            raise ConfigError("--d: no bandwidth constants given")
    if args.out in (None, "-") and len(settings) > 1:
        raise ConfigError("--out is required when several --d values are given")
    fits = [(d, fit_m_curve(sample, args.grid, h, EPANECHNIKOV, args.route)) for d, h in settings]
    for d, fit in fits:
        target = args.out if len(fits) == 1 else _curve_filename(args.out, d)
        meta = {"input": os.path.basename(args.input), "n": n, "route": args.route,
                "d": d, "h": fit.h}
        with _output(target) as out:
            write_csv(out, fit.rows(), ("s", "m_hat", "route", "h", "kernel", "flag"), meta)
        flagged = sum(1 for f in fit.flags if f)
        if flagged:
            print(f"warning: d={d}: {flagged} grid point(s) flagged out of range", file=sys.stderr)
    return EXIT_OK


def cmd_limit(args) -> int:
    path = _path_from_args(args)
    law = LimitLaw(path, args.regime)
    values = args.grid
    if any(not v < 0 for v in values):
        raise ConfigError("--grid: limit evaluation needs strictly negative values")
    points = [(x, y) for x in values for y in values]
    rows = [{"x": x, "y": y, "G": limit_cdf(law, x, y), "l": tail_dependence_fn(law, x, y)}
            for x, y in points]
    columns = ["x", "y", "G", "l"]
    meta = {"path": path.describe(), "regime": args.regime}
    if args.reps is not None:
        _check_positive("reps", args.reps)
        exp = MaximaExperiment(path, args.n, args.reps, tuple(points), args.seed)
        for row, emp in zip(rows, empirical_maxima_cdf(exp, law)):
            row["empirical"] = emp["empirical"]
            row["gap"] = emp["gap"]
        columns += ["empirical", "gap"]
        meta.update({"n": args.n, "reps": args.reps, "seed": args.seed})
    with _output(args.out) as out:
        write_csv(out, rows, columns, meta, footer={"lambda": tail_coefficient(law)})
    return EXIT_OK


def cmd_replicate_table(args) -> int:
    if args.table is None:
        raise ConfigError("--table is required (1, 2 or 3)")
    _check_positive("reps", args.reps)
    _check_positive("jobs", args.jobs)
    overrides = {}
    if args.n is not None:
        overrides["n"] = [int(v) for v in _float_list(args.n)]
    for key in ("alpha", "beta", "gamma"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = _float_list(value)
    if args.estimator is not None:
        overrides["estimators"] = (args.estimator,)
    table = replicate_table(args.table, reps=args.reps, seed=args.seed, jobs=args.jobs, **overrides)
    with _output(args.out) as out:
        write_csv(out, table.rows, SUMMARY_COLUMNS, table.metadata)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _load_config(path) -> dict:
    """``key=value`` lines; ``#`` starts a comment. Keys use flag names."""
    config = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"--config: cannot read {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        config[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyncopula",
        description="Normal copula with a correlation drifting along the sample: "
                    "simulation, estimation, limit laws and Monte-Carlo tables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value file; command-line flags take precedence")
        p.add_argument("--out", help="output CSV (default: standard output)")

    p = sub.add_parser("simulate", help="draw one sample (columns i, u, v)")
    common(p)
    _add_path_args(p)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("fit-param", help="parametric fit of m(s)")
    common(p)
    p.add_argument("input", help="CSV with columns u,v or x,y in sample order")
    p.add_argument("--path", default="const", help="family to fit: const, linear or power")
    p.add_argument("--estimator", choices=ESTIMATORS, default="spearman")
    p.add_argument("--hotelling", action="store_true", help="add a Hotelling T^2 test of the null values")
    p.add_argument("--constancy", action="store_true", help="add the test of a constant drift")
    for name in ("alpha", "beta", "gamma"):
        p.add_argument(f"--null-{name}", type=float, default=None)
    p.set_defaults(handler=cmd_fit_param)

    p = sub.add_parser("fit-nonparam", help="local-linear estimate of m(s)")
    common(p)
    p.add_argument("input", help="CSV with columns u,v or x,y in sample order")
    p.add_argument("--route", choices=ESTIMATORS, default="spearman")
    p.add_argument("--d", default="0.2,0.3,0.4,0.5",
                   help="bandwidth constants d in h = d (log^2 n / n)^(1/5), or 'auto'")
    p.add_argument("--grid", type=_grid, default=_grid("0.1:0.9:0.01"),
                   help="evaluation points, start:stop:step or comma list")
    p.set_defaults(handler=cmd_fit_nonparam)

    p = sub.add_parser("limit", help="evaluate the limit law of the normalised maxima")
    common(p)
    _add_path_args(p)
    p.add_argument("--regime", choices=REGIMES, default=HUSLER_REISS)
    p.add_argument("--grid", type=_grid, default=_grid("-2,-1,-0.5,-0.25"),
                   help="negative coordinates; every (x, y) pair is evaluated")
    p.add_argument("--reps", type=int, default=None, help="add an empirical comparison with this many replications")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_limit)

    p = sub.add_parser("replicate-table", help="Monte-Carlo replication of simulation table 1, 2 or 3")
    common(p)
    p.add_argument("--table", type=int, choices=(1, 2, 3), default=None)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker processes (output does not depend on it)")
    p.add_argument("--n", default=None, help="comma-separated sample sizes")
    p.add_argument("--alpha", default=None)
    p.add_argument("--beta", default=None)
    p.add_argument("--gamma", default=None)
    p.add_argument("--estimator", choices=ESTIMATORS, default=None)
    p.set_defaults(handler=cmd_replicate_table)

    p = sub.add_parser("test", help="Hotelling T^2 and constancy tests on a sample")
    common(p)
    p.add_argument("input", help="CSV with columns u,v or x,y in sample order")
    p.add_argument("--kind", choices=("hotelling", "constancy", "both"), default="both")
    p.add_argument("--path", default="power", help="family for the Hotelling test")
    p.add_argument("--estimator", choices=ESTIMATORS, default="spearman")
    for name in ("alpha", "beta", "gamma"):
        p.add_argument(f"--null-{name}", type=float, default=None)
    p.set_defaults(handler=cmd_test)

    parser.subparsers = sub  # kept for config-file defaults
    return parser


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    config = _load_config(args.config)
    subparser = parser.subparsers.choices[args.command]
    known = {a.dest for a in subparser._actions}
    unknown = sorted(set(config) - known - {"config", "out"} | ({"command", "handler"} & set(config)))
    if unknown:
        raise ConfigError(f"--config: unknown keys for {args.command}: {', '.join(unknown)}")
    defaults = {}
    for action in subparser._actions:
        if action.dest in config:
            value = config[action.dest]
            if isinstance(action, argparse._StoreTrueAction):
                value = value.lower() in ("1", "true", "yes")
            defaults[action.dest] = value
    # string defaults go through each action's type converter on re-parse
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
