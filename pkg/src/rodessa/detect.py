"""Cellwise and casewise outlier flags, the enhanced-plot data model and the
machine-readable fit report."""
import json
from dataclasses import dataclass, field

import numpy as np

from . import style

SCHEMA_VERSION = "1.0"


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class OutlierFlags:
    cell: np.ndarray        # N x p bool
    sign: np.ndarray        # N x p in {-1, 0, 1}: sign of raw minus reconstructed
    case: np.ndarray        # N bool
    q_cell: float = float("nan")
    q_case: float = float("nan")

    @property
    def n_cell(self):
        return int(self.cell.sum())

    @property
    def n_case(self):
        return int(self.case.sum())


def flags_from_weights(cell_weights, case_weights, residual_sign, q_cell, q_case):
    cell = np.asarray(cell_weights) < q_cell
    case = np.asarray(case_weights) < q_case
    return OutlierFlags(cell, np.asarray(residual_sign, dtype=int), case, q_cell, q_case)


def flag_outliers(result, table, rtol=1e-9):
    """Flag cells and cases whose standardized weight falls below the
    calibrated alpha-quantiles.

    Raises
    ------
    ConfigurationError
        If ``table`` was calibrated for a different (N, p, L) or different
        tuning constants than ``result``.
    """
    N, p, L = result.series.N, result.series.p, result.spec.L
    if (table.N, table.p, table.L) != (N, p, L):
        raise ConfigurationError(
            f"calibration table is for (N, p, L)=({table.N}, {table.p}, {table.L}), "
            f"fit has ({N}, {p}, {L})")
    for name, a, b in (("c1", table.c1, result.loss1.tuning), ("c2", table.c2, result.loss2.tuning)):
        if abs(a - b) > rtol * max(abs(a), abs(b)):
            raise ConfigurationError(f"calibration {name}={a:.6g} differs from fit {name}={b:.6g}")
    sign = np.sign(result.series.values - result.reconstruction.values).astype(int)
    return flags_from_weights(result.standardized_cell_weights,
                              result.standardized_case_weights, sign,
                              table.q_cell, table.q_case)


@dataclass(frozen=True)
class PlotModel:
    """Everything the enhanced time series plot displays.

    Arrays are N x p (cells) or length N (cases); ``forecasts`` is h x p or
    None. ``meta`` carries fit diagnostics for the report.
    """

    names: tuple
    times: tuple
    raw: np.ndarray
    reconstructed: np.ndarray
    cell_weights: np.ndarray
    cell_flags: np.ndarray
    cell_sign: np.ndarray
    case_weights: np.ndarray
    case_flags: np.ndarray
    cell_colors: tuple
    case_colors: tuple
    forecasts: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.raw.shape[0]

    @property
    def p(self):
        return self.raw.shape[1]

    @property
    def horizon(self):
        return 0 if self.forecasts is None else self.forecasts.shape[0]

    def __post_init__(self):
        N, p = self.raw.shape
        for name in ("reconstructed", "cell_weights", "cell_flags", "cell_sign"):
            if getattr(self, name).shape != (N, p):
                raise ValueError(f"{name} must be {N} x {p}")
        for name in ("case_weights", "case_flags"):
            if getattr(self, name).shape != (N,):
                raise ValueError(f"{name} must have length {N}")
        if len(self.names) != p or len(self.times) != N:
            raise ValueError("names/times do not match the data shape")
        if self.forecasts is not None and self.forecasts.shape[1:] != (p,):
            raise ValueError(f"forecasts must be h x {p}")


def empty_plot_model():
    z = np.zeros((0, 0))
    return PlotModel((), (), z, z, z, z.astype(bool), z.astype(int), np.zeros(0),
                     np.zeros(0, dtype=bool), (), ())


def build_plot_model(result, flags, forecasts=None):
    series = result.series
    w_cell = result.standardized_cell_weights
    w_case = result.standardized_case_weights
    sign = flags.sign
    cell_colors = tuple(tuple(style.cell_color(w_cell[i, j], sign[i, j])
                              for j in range(series.p)) for i in range(series.N))
    case_colors = tuple(style.case_color(w) for w in w_case)
    times = series.timestamps or tuple(str(i) for i in range(1, series.N + 1))
    meta = {
        "sigma1": [float(s) for s in result.residuals.sigma1],
        "sigma2": float(result.residuals.sigma2),
        "c1": float(result.loss1.tuning),
        "c2": float(result.loss2.tuning),
        "q_cell": float(flags.q_cell),
        "q_case": float(flags.q_case),
        "objective_trace": [float(v) for v in result.objective_trace],
        "iterations": int(result.n_iter),
        "converged": bool(result.converged),
        "initializer": result.init_label,
        "window": int(result.spec.L),
        "rank": int(result.fit.rank),
    }
    return PlotModel(
        names=series.names,
        times=times,
        raw=np.asarray(series.values),
        reconstructed=np.asarray(result.reconstruction.values),
        cell_weights=w_cell,
        cell_flags=flags.cell,
        cell_sign=sign,
        case_weights=w_case,
        case_flags=flags.case,
        cell_colors=cell_colors,
        case_colors=case_colors,
        forecasts=None if forecasts is None else np.asarray(forecasts, dtype=float),
        meta=meta,
    )


def emit_report(model, flags=None, config=None):
    """JSON report of per-cell and per-case weights, flags and residuals.

    Schema (version 1.0)::

        schema_version  "1.0"
        config          resolved run configuration (object or null)
        N, p            ints
        names           [str] * p
        times           [str] * N
        fit             {sigma1, sigma2, c1, c2, q_cell, q_case,
                         objective_trace, iterations, converged, ...}
        cells           [{time, series, value, reconstructed, residual,
                          weight, flag, sign}] in time-major order
        cases           [{time, weight, flag}]
        forecasts       [[float] * p] * h or null
    """
    cell_flags = model.cell_flags if flags is None else flags.cell
    case_flags = model.case_flags if flags is None else flags.case
    cells = []
    for i in range(model.N):
        for j in range(model.p):
            x, xh = float(model.raw[i, j]), float(model.reconstructed[i, j])
            cells.append({
                "time": model.times[i], "series": model.names[j], "value": x,
                "reconstructed": xh, "residual": x - xh,
                "weight": float(model.cell_weights[i, j]),
                "flag": bool(cell_flags[i, j]), "sign": int(model.cell_sign[i, j]),
            })
    cases = [{"time": model.times[i], "weight": float(model.case_weights[i]),
              "flag": bool(case_flags[i])} for i in range(model.N)]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "N": model.N,
        "p": model.p,
        "names": list(model.names),
        "times": list(model.times),
        "fit": model.meta,
        "cells": cells,
        "cases": cases,
        "forecasts": None if model.forecasts is None else model.forecasts.tolist(),
    }
    return json.dumps(doc, indent=1) + "\n"


def parse_report(text):
    """Load a report and check its structure; returns the decoded dict."""
    doc = json.loads(text)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {doc.get('schema_version')!r}")
    N, p = doc["N"], doc["p"]
    if len(doc["cells"]) != N * p or len(doc["cases"]) != N:
        raise ValueError("report cell/case counts do not match N and p")
    if len(doc["names"]) != p or len(doc["times"]) != N:
        raise ValueError("report names/times do not match N and p")
    return doc


def report_arrays(doc):
    """Cell weights, cell flags, case weights and case flags as arrays."""
    N, p = doc["N"], doc["p"]
    w = np.array([c["weight"] for c in doc["cells"]], dtype=float).reshape(N, p)
    f = np.array([c["flag"] for c in doc["cells"]], dtype=bool).reshape(N, p)
    cw = np.array([c["weight"] for c in doc["cases"]], dtype=float)
    cf = np.array([c["flag"] for c in doc["cases"]], dtype=bool)
    return w, f, cw, cf
