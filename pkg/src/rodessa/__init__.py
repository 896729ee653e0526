"""Robust multivariate singular spectrum analysis with diagonalwise
reweighting, cellwise/casewise outlier flags and recurrent forecasts."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .calibration import (
    CalibrationTable,
    calibrate_tuning,
    calibration_table,
    default_window,
    flagging_quantiles,
    rank_curve,
)
from .detect import (
    OutlierFlags,
    PlotModel,
    build_plot_model,
    emit_report,
    flag_outliers,
    parse_report,
)
from .fit import RodessaConfig, RodessaResult, irls_fit, objective, stationarity
from .forecast import RecurrenceModel, VerticalityError, forecast, recurrence_coefficients
from .loss import LossSpec, MScaleConfig, mscale, rho
from .lowrank import LowRankFit, l1_lowrank, pcp_lowrank, rpca_pcp, svd_lowrank
from .series import (
    EmbeddingSpec,
    MultivariateSeries,
    TrajectoryMatrix,
    WindowError,
    diagonal_average,
    embed,
    read_csv,
    write_csv,
)
from .svg import emit_svg
from .data import demo_path, load_demo

__all__ = [
    "BACKEND", "CalibrationTable", "calibrate_tuning", "calibration_table", "default_window",
    "flagging_quantiles", "rank_curve", "OutlierFlags", "PlotModel", "build_plot_model",
    "emit_report", "flag_outliers", "parse_report", "RodessaConfig", "RodessaResult",
    "irls_fit", "objective", "stationarity", "RecurrenceModel", "VerticalityError",
    "forecast", "recurrence_coefficients", "LossSpec", "MScaleConfig", "mscale", "rho",
    "LowRankFit", "l1_lowrank", "pcp_lowrank", "rpca_pcp", "svd_lowrank", "EmbeddingSpec",
    "MultivariateSeries", "TrajectoryMatrix", "WindowError", "diagonal_average", "embed",
    "read_csv", "write_csv", "emit_svg", "demo_path", "load_demo",
]
