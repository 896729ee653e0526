"""Command-line interface: ``rodessa <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence.
Every artifact carries the fully resolved configuration, including the
seed, so reruns with the same configuration reproduce it byte for byte.
"""
import argparse
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import __version__
from .calibration import CalibrationError, calibration_table, default_window, rank_curve
from .detect import build_plot_model, emit_report, flag_outliers, parse_report, PlotModel
from .fit import RodessaConfig, irls_fit
from .forecast import VerticalityError, forecast, recurrence_coefficients
from .loss import DegenerateScaleError
from .lowrank import ConvergenceWarning, RankError
from .series import (
    EmbeddingSpec,
    ShapeError,
    WindowError,
    format_float,
    read_csv,
    write_csv,
)
from .sim import METHODS, MODES, SCENARIOS, StudyGrid, run_method, run_study
from . import style, svg

log = logging.getLogger("rodessa")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- helpers -----------------------------------------------------------------

def _resolve_seed(seed):
    if seed is not None:
        return seed
    seed = int(np.random.SeedSequence().generate_state(1, dtype=np.uint32)[0])
    log.warning("no --seed given; using entropy seed %d", seed)
    return seed


def _config_comment(config):
    return "rodessa " + __version__ + " config " + json.dumps(config, sort_keys=True)


def _echo(config):
    """Print the resolved configuration to stdout, one JSON line."""
    print(json.dumps(config, sort_keys=True))
    return config


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _path(args, name):
    return os.path.join(_outdir(args), name)


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def _load(args):
    series = read_csv(args.input)
    if args.window is not None:
        L = args.window
        policy = "explicit"
    else:
        policy = args.window_policy
        L = default_window(series.N, series.p, policy)
    spec = EmbeddingSpec(series.N, L)
    return series, spec, policy


def _base_config(args, series, spec, policy, command):
    return {
        "command": command,
        "input": os.path.basename(args.input),
        "N": series.N,
        "p": series.p,
        "window": spec.L,
        "window_policy": policy,
        "rank": args.rank,
        "delta_c": args.delta_c,
        "delta_r": args.delta_r,
        "alpha": args.alpha,
        "tol": args.tol,
        "max_iter": args.max_iter,
        "replications": args.replications,
        "seed": args.seed,
    }


def _method_config(args):
    return RodessaConfig(args.rank, delta_c=args.delta_c, delta_r=args.delta_r, tol=args.tol,
                         max_iter=args.max_iter, calibration_replications=args.replications,
                         seed=args.seed)


def _fit_rodessa(args, series, spec):
    cfg = _method_config(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        result = irls_fit(series, spec, cfg)
    log.info("fit: %d iterations, converged=%s, initializer=%s, objective=%.6g",
             result.n_iter, result.converged, result.init_label, result.objective_trace[-1])
    return result


def _table(args, series, spec):
    return calibration_table(series.N, series.p, spec.L, args.delta_c, args.delta_r,
                             args.alpha, args.replications, args.seed, args.cache_dir)


def _trace_csv(trace, comment):
    lines = [f"# {comment}", "iteration,objective"]
    lines += [f"{k},{float(v)!r}" for k, v in enumerate(trace)]
    return "\n".join(lines) + "\n"


def _forecast_stamps(series, h):
    if series.timestamps is None:
        return None
    return tuple(f"+{s}" for s in range(1, h + 1))


def _write_forecasts(args, series, values, comment):
    # written directly: a forecast of h < 2 rows is not a valid MultivariateSeries
    stamps = _forecast_stamps(series, len(values))
    header = (["time"] if stamps is not None else []) + list(series.names)
    lines = [f"# {comment}", ",".join(header)]
    for s, row in enumerate(values):
        cells = [format_float(v) for v in row]
        lines.append(",".join(([stamps[s]] if stamps is not None else []) + cells))
    _write(_path(args, "forecast.csv"), "\n".join(lines) + "\n")


def _fit_outputs(args, result, config, forecasts=None):
    comment = _config_comment(config)
    write_csv(_path(args, "reconstruction.csv"), result.series, comment,
              values=result.reconstruction.values)
    _write(_path(args, "trace.csv"), _trace_csv(result.objective_trace, comment))
    table = _table(args, result.series, result.spec)
    flags = flag_outliers(result, table)
    model = build_plot_model(result, flags, forecasts)
    _write(_path(args, "report.json"), emit_report(model, flags, config))
    if not args.no_svg:
        _write(_path(args, "plot.svg"), svg.emit_svg(model, comment=comment))
    log.info("flagged %d cells and %d cases", flags.n_cell, flags.n_case)
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


# --- commands ----------------------------------------------------------------

def cmd_fit(args):
    series, spec, policy = _load(args)
    config = _base_config(args, series, spec, policy, "fit")
    config["method"] = args.method
    _echo(config)
    if args.method != "RODESSA":
        rec, _ = run_method(args.method, series, spec, args.rank, _method_config(args), h=0)
        write_csv(_path(args, "reconstruction.csv"), series, _config_comment(config),
                  values=rec.values)
        return EXIT_OK
    result = _fit_rodessa(args, series, spec)
    return _fit_outputs(args, result, config)


def cmd_forecast(args):
    series, spec, policy = _load(args)
    config = _base_config(args, series, spec, policy, "forecast")
    config.update(method=args.method, horizon=args.horizon)
    _echo(config)
    comment = _config_comment(config)
    if args.method != "RODESSA":
        rec, fc = run_method(args.method, series, spec, args.rank, _method_config(args),
                             args.horizon)
        write_csv(_path(args, "reconstruction.csv"), series, comment, values=rec.values)
        _write_forecasts(args, series, fc, comment)
        return EXIT_OK
    result = _fit_rodessa(args, series, spec)
    fc = forecast(recurrence_coefficients(result.fit), result.reconstruction, args.horizon)
    _write_forecasts(args, series, fc, comment)
    return _fit_outputs(args, result, config, fc)


def cmd_detect(args):
    series, spec, policy = _load(args)
    config = _echo(_base_config(args, series, spec, policy, "detect"))
    result = _fit_rodessa(args, series, spec)
    code = _fit_outputs(args, result, config)
    flags = flag_outliers(result, _table(args, series, spec))
    rows = ["time,series,direction,weight"]
    stamps = series.timestamps or tuple(str(i) for i in range(1, series.N + 1))
    w = result.standardized_cell_weights
    for i, j in zip(*np.nonzero(flags.cell)):
        rows.append(f"{stamps[i]},{series.names[j]},{int(flags.sign[i, j]):+d},{float(w[i, j])!r}")
    wc = result.standardized_case_weights
    for i in np.nonzero(flags.case)[0]:
        rows.append(f"{stamps[i]},*,0,{float(wc[i])!r}")
    _write(_path(args, "flags.csv"), f"# {_config_comment(config)}\n" + "\n".join(rows) + "\n")
    return code


def cmd_calibrate(args):
    if args.input is not None:
        series = read_csv(args.input)
        N, p = series.N, series.p
    elif args.length is not None and args.series is not None:
        N, p = args.length, args.series
    else:
        raise UsageError("calibrate: give an input CSV or both --length and --series")
    L = args.window if args.window is not None else default_window(N, p, args.window_policy)
    EmbeddingSpec(N, L)
    table = calibration_table(N, p, L, args.delta_c, args.delta_r, args.alpha,
                              args.replications, args.seed, args.cache_dir)
    doc = json.loads(table.to_json())
    doc["config"] = {"command": "calibrate", "N": N, "p": p, "window": L,
                     "delta_c": args.delta_c, "delta_r": args.delta_r, "alpha": args.alpha,
                     "replications": args.replications, "seed": args.seed}
    _echo(doc["config"])
    _write(_path(args, "calibration.json"), json.dumps(doc, indent=2, sort_keys=True) + "\n")
    log.info("c1=%.6g c2=%.6g q_cell=%.6g q_case=%.6g", table.c1, table.c2, table.q_cell,
             table.q_case)
    return EXIT_OK


def cmd_rank_scan(args):
    series, spec, policy = _load(args)
    config = _base_config(args, series, spec, policy, "rank-scan")
    config["max_rank"] = args.max_rank
    del config["rank"]
    _echo(config)
    cfg = RodessaConfig(1, delta_c=args.delta_c, delta_r=args.delta_r, tol=args.tol,
                        max_iter=args.max_iter, calibration_replications=args.replications,
                        seed=args.seed)
    try:
        curve = rank_curve(series, spec, cfg, args.max_rank)
    except ValueError as exc:
        raise UsageError(f"rank-scan: {exc}") from None
    comment = _config_comment(config)
    lines = [f"# {comment}", "rank,objective"] + [f"{r},{v!r}" for r, v in curve]
    _write(_path(args, "rank_curve.csv"), "\n".join(lines) + "\n")
    if not args.no_svg:
        _write(_path(args, "rank_curve.svg"),
               svg.rank_chart([r for r, _ in curve], [v for _, v in curve], comment))
    return EXIT_OK


def cmd_simulate(args):
    grid = StudyGrid(scenarios=tuple(args.scenario), modes=tuple(args.modes),
                     fractions=tuple(args.fractions), gammas=tuple(args.gammas),
                     methods=tuple(args.methods), L=args.sim_window, q=args.rank,
                     h=args.horizon, shared_noise=args.shared_noise,
                     delta_c=args.delta_c, delta_r=args.delta_r)
    config = {"command": "simulate", "scenarios": list(grid.scenarios), "modes": list(grid.modes),
              "fractions": list(grid.fractions), "gammas": list(grid.gammas),
              "methods": list(grid.methods), "window": grid.L, "rank": grid.q,
              "horizon": grid.h, "shared_noise": grid.shared_noise,
              "delta_c": grid.delta_c, "delta_r": grid.delta_r,
              "replications": args.replications, "seed": args.seed}
    _echo(config)
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    log.info("simulating %d grid cells x %d replications on %d workers",
             len(list(grid.cells())), args.replications, jobs)
    report = run_study(grid, args.replications, args.seed, jobs)
    comment = _config_comment(config)
    _write(_path(args, "study.csv"), report.to_csv(comment))
    if not args.no_svg:
        for metric in ("RE", "FE"):
            for (s, mode, eps), doc in svg.study_charts(report, metric, comment).items():
                _write(_path(args, f"study_S{s}_{mode}_eps{eps:g}_{metric}.svg"), doc)
    return EXIT_OK


def _model_from_report(doc):
    N, p = doc["N"], doc["p"]
    cells = doc["cells"]

    def grid(key, dtype=float):
        return np.array([c[key] for c in cells], dtype=dtype).reshape(N, p)

    w = grid("weight")
    sign = grid("sign", int)
    wc = np.array([c["weight"] for c in doc["cases"]], dtype=float)
    fc = None if doc["forecasts"] is None else np.array(doc["forecasts"], dtype=float).reshape(-1, p)
    return PlotModel(
        names=tuple(doc["names"]), times=tuple(doc["times"]),
        raw=grid("value"), reconstructed=grid("reconstructed"),
        cell_weights=w, cell_flags=grid("flag", bool), cell_sign=sign,
        case_weights=wc, case_flags=np.array([c["flag"] for c in doc["cases"]], dtype=bool),
        cell_colors=tuple(tuple(style.cell_color(w[i, j], sign[i, j]) for j in range(p))
                          for i in range(N)),
        case_colors=tuple(style.case_color(v) for v in wc),
        forecasts=fc, meta=doc["fit"])


def cmd_plot(args):
    with open(args.report) as fh:
        doc = parse_report(fh.read())
    _echo({"command": "plot", "report": os.path.basename(args.report), "width": args.width,
           "panel_height": args.panel_height, "fit_config": doc.get("config")})
    model = _model_from_report(doc)
    geometry = svg.Geometry(width=args.width, panel_height=args.panel_height)
    comment = _config_comment(doc.get("config"))
    out = args.svg or _path(args, "plot.svg")
    _write(out, svg.emit_svg(model, geometry, comment=comment))
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _fraction(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return v


def _common(p, rank=True):
    p.add_argument("--delta-c", type=_fraction, default=0.9,
                   help="target mean standardized cell weight (default 0.9)")
    p.add_argument("--delta-r", type=_fraction, default=0.9,
                   help="target mean standardized case weight (default 0.9)")
    p.add_argument("--alpha", type=float, default=0.01, help="flagging level (default 0.01)")
    p.add_argument("--tol", type=float, default=1e-6, help="relative change tolerance")
    p.add_argument("--max-iter", type=_positive_int, default=100)
    p.add_argument("--replications", type=_positive_int, default=200,
                   help="Monte Carlo replications for calibration (default 200)")
    p.add_argument("--cache-dir", default=None, help="directory for calibration cache files")
    p.add_argument("--seed", type=_nonneg_int, default=None,
                   help="random seed; an entropy seed is drawn and logged if omitted")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--no-svg", action="store_true", help="skip SVG output")
    p.add_argument("-v", "--verbose", action="store_true")


def _window(p):
    p.add_argument("--window", "-L", type=int, default=None, help="window length L")
    p.add_argument("--window-policy", choices=("auto", "multivariate", "half"), default="auto",
                   help="default window rule when -L is omitted")


def build_parser():
    parser = _Parser(prog="rodessa", description="Robust multivariate singular spectrum "
                     "analysis with cellwise and casewise outlier detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    for name, fn, helptext in (("fit", cmd_fit, "fit and reconstruct a series"),
                               ("forecast", cmd_forecast, "fit and forecast"),
                               ("detect", cmd_detect, "flag cellwise and casewise outliers")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("input", help="CSV file, one column per series")
        _window(p)
        p.add_argument("--rank", "-q", type=_positive_int, default=2)
        if name != "detect":
            p.add_argument("--method", choices=METHODS, default="RODESSA")
        else:
            p.set_defaults(method="RODESSA")
        p.add_argument("--horizon", "-H", type=_nonneg_int, default=20 if name == "forecast" else 0)
        _common(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("calibrate", help="calibrate tuning constants and flag thresholds")
    p.add_argument("input", nargs="?", default=None)
    p.add_argument("--length", "-N", type=_positive_int, default=None)
    p.add_argument("--series", "-p", type=_positive_int, default=None)
    _window(p)
    _common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("rank-scan", help="robust objective by rank")
    p.add_argument("input")
    _window(p)
    p.add_argument("--max-rank", type=_positive_int, default=10)
    _common(p)
    p.set_defaults(func=cmd_rank_scan, rank=None)

    p = sub.add_parser("simulate", help="Monte Carlo comparison of methods")
    p.add_argument("--scenario", type=int, nargs="+", choices=sorted(SCENARIOS), default=[3])
    p.add_argument("--modes", nargs="+", choices=MODES, default=["cellwise"])
    p.add_argument("--fractions", type=_fraction, nargs="+", default=[0.2])
    p.add_argument("--gammas", type=float, nargs="+", default=[0.0, 8.0])
    p.add_argument("--methods", "--method", nargs="+", choices=METHODS, default=list(METHODS))
    p.add_argument("--window", "-L", dest="sim_window", type=int, default=35)
    p.add_argument("--rank", "-q", type=_positive_int, default=2)
    p.add_argument("--horizon", "-H", type=_nonneg_int, default=20)
    p.add_argument("--shared-noise", action="store_true",
                   help="one noise draw per time point shared by all series")
    p.add_argument("--jobs", "-j", type=_positive_int, default=None,
                   help="worker processes (default: all cores)")
    _common(p)
    p.set_defaults(func=cmd_simulate, replications=50)

    p = sub.add_parser("plot", help="render a report as an enhanced time series plot")
    p.add_argument("report", help="report.json written by fit/detect/forecast")
    p.add_argument("--svg", default=None, help="output file (default OUT/plot.svg)")
    p.add_argument("--out", default=".")
    p.add_argument("--width", type=float, default=900.0)
    p.add_argument("--panel-height", type=float, default=120.0)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_plot, seed=0)
    return parser


def main(argv=None):
    logging.basicConfig(format="rodessa: %(levelname)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        log.setLevel(logging.INFO if args.verbose else logging.WARNING)
        args.seed = _resolve_seed(args.seed)
        if getattr(args, "alpha", 0.01) is not None and not 0 <= getattr(args, "alpha", 0.01) <= 1:
            raise UsageError(f"--alpha must lie in [0, 1], got {args.alpha}")
        code = args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, ShapeError, WindowError, RankError, VerticalityError,
            DegenerateScaleError, CalibrationError, KeyError) as exc:
        print(f"rodessa: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if code == EXIT_NONCONVERGED:
        print("rodessa: warning: IRLS did not converge; outputs written", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
