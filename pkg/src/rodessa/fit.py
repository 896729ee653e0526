"""Diagonalwise robust low-rank approximation of a stacked trajectory matrix.

Residuals are aggregated along anti-diagonals: ``r_cell[i, j]`` is the mean
squared residual of the anti-diagonal that carries ``x_i`` of series ``j``,
and ``r_case[i]`` combines the p cell residuals of time ``i`` through the
bounded loss ``rho1``. The objective is

    sum_i p n_i s2^2 rho2(r_case[i] / s2^2),
    r_case[i] = mean_j s1_j^2 rho1(r_cell[i, j] / s1_j^2)

with fixed scales ``s1`` (one per series) and ``s2``. It is minimised by
iteratively reweighted alternating least squares; the weight of trajectory
entry ``(l, k)`` is ``rho1'(.) * rho2'(.)`` of the time index it encodes.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from .loss import DegenerateScaleError, LossSpec, MScaleConfig, mscale
from .lowrank import (
    ConvergenceWarning,
    LowRankFit,
    SingularGramWarning,
    balance,
    initial_candidates,
    select_initializer,
    wls_update_U,
    wls_update_V,
)
from .series import (
    EmbeddingSpec,
    MultivariateSeries,
    ShapeError,
    diagonal_average,
    diagonal_means,
    embed,
    hankelize,
)

__all__ = [
    "RodessaConfig", "ResidualState", "WeightState", "RodessaResult",
    "diagonal_residuals", "case_residuals", "objective", "cell_weights",
    "case_weights", "assemble_weight_matrix", "wls_update_U", "wls_update_V",
    "estimate_scales", "irls_fit", "stationarity", "DegenerateScaleWarning",
]

SCALE_FLOOR = 1e-8


class DegenerateScaleWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class RodessaConfig:
    """Settings for :func:`irls_fit`.

    ``c1``/``c2`` fix the biweight tuning constants directly; when left as
    ``None`` they are calibrated by Monte Carlo so that the mean
    standardized cell/case weight at the reference model equals
    ``delta_c``/``delta_r``.
    """

    rank: int
    c1: float = None
    c2: float = None
    delta_c: float = 0.9
    delta_r: float = 0.9
    tol: float = 1e-6
    max_iter: int = 100
    initializer: str = "auto"
    calibration_replications: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")
        if not self.tol > 0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")
        for name in ("delta_c", "delta_r"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


@dataclass(frozen=True)
class ResidualState:
    r_cell: np.ndarray
    r_case: np.ndarray
    sigma1: np.ndarray
    sigma2: float


@dataclass(frozen=True)
class WeightState:
    w_cell: np.ndarray
    w_case: np.ndarray
    W: np.ndarray


@dataclass(frozen=True)
class RodessaResult:
    series: MultivariateSeries
    spec: EmbeddingSpec
    fit: LowRankFit
    residuals: ResidualState
    weights: WeightState
    reconstruction: MultivariateSeries
    loss1: LossSpec
    loss2: LossSpec
    objective_trace: tuple
    n_iter: int
    converged: bool
    init_label: str = ""
    config: RodessaConfig = field(default=None, repr=False)

    @property
    def standardized_cell_weights(self):
        return self.weights.w_cell / self.loss1.max_weight

    @property
    def standardized_case_weights(self):
        return self.weights.w_case / self.loss2.max_weight


def _check_fit(series, U, V, spec):
    K = spec.K(series.p)
    if U.shape[0] != spec.L or V.shape[0] != K or U.shape[1] != V.shape[1]:
        raise ShapeError(f"factors {U.shape} and {V.shape} do not match a {spec.L} x {K} trajectory")


def diagonal_residuals(series, fit, spec):
    """Mean squared residual along every anti-diagonal, as an N x p array."""
    U, V = (fit.U, fit.V) if isinstance(fit, LowRankFit) else fit
    _check_fit(series, U, V, spec)
    R = hankelize(series.values, spec.L) - U @ V.T
    return np.maximum(diagonal_means(R * R, spec, series.p), 0.0)


def case_residuals(r_cell, sigma1, loss1):
    """``r_i = mean_j sigma1_j^2 rho1(r_cell[i, j] / sigma1_j^2)``."""
    s2 = np.asarray(sigma1, dtype=float) ** 2
    return np.mean(s2 * loss1(np.asarray(r_cell) / s2), axis=1)


def objective_from_residuals(r_cell, sigma1, sigma2, loss1, loss2, diag_lengths):
    p = r_cell.shape[1]
    r_case = case_residuals(r_cell, sigma1, loss1)
    return float(np.sum(p * diag_lengths * sigma2 ** 2 * loss2(r_case / sigma2 ** 2)))


def objective(series, fit, spec, sigma1, sigma2, loss1, loss2):
    r_cell = diagonal_residuals(series, fit, spec)
    return objective_from_residuals(r_cell, sigma1, sigma2, loss1, loss2, spec.diag_lengths)


def cell_weights(r_cell, sigma1, loss1):
    s2 = np.asarray(sigma1, dtype=float) ** 2
    return loss1.derivative(np.asarray(r_cell) / s2)


def case_weights(r_case, sigma2, loss2):
    return loss2.derivative(np.asarray(r_case) / sigma2 ** 2)


def assemble_weight_matrix(w_cell, w_case, spec):
    """Entrywise product of the Hankel-embedded cell and case weights."""
    w_cell = np.asarray(w_cell, dtype=float)
    if w_cell.ndim == 1:
        w_cell = w_cell[:, None]
    return hankelize(w_cell * np.asarray(w_case, dtype=float)[:, None], spec.L)


def _data_scale(series):
    return float(np.sqrt(np.mean(series.values ** 2)))


def _floored_mscale(values, floor, what, cfg):
    try:
        s = mscale(values, cfg)
    except DegenerateScaleError:
        s = 0.0
    if s < floor:
        warnings.warn(f"degenerate residual scale for {what}; floored at {floor:.3g}",
                      DegenerateScaleWarning, stacklevel=3)
        return floor if floor > 0 else 1.0
    return s


def estimate_scales(series, init_fit, spec, loss1, cfg=MScaleConfig()):
    """M-scales of the diagonal residual norms of the starting fit.

    ``sigma1[j]`` is the M-scale of ``sqrt(r_cell[:, j])`` and ``sigma2``
    that of ``sqrt(r_case)``, so their squares standardize the squared
    norms. Scales below ``1e-8`` times the RMS of the data are floored
    there, with a warning.
    """
    r_cell = diagonal_residuals(series, init_fit, spec)
    floor = SCALE_FLOOR * _data_scale(series)
    sigma1 = np.array([
        _floored_mscale(np.sqrt(r_cell[:, j]), floor, f"series {j + 1}", cfg)
        for j in range(series.p)])
    r_case = case_residuals(r_cell, sigma1, loss1)
    sigma2 = _floored_mscale(np.sqrt(r_case), floor, "cases", cfg)
    return sigma1, sigma2


class _State:
    """Residuals, weights and objective of one fit under frozen scales."""

    def __init__(self, series, spec, X, U, V, sigma1, sigma2, loss1, loss2):
        self.U, self.V = U, V
        self.fit = U @ V.T
        R = X - self.fit
        self.r_cell = np.maximum(diagonal_means(R * R, spec, series.p), 0.0)
        self.r_case = case_residuals(self.r_cell, sigma1, loss1)
        self.w_cell = cell_weights(self.r_cell, sigma1, loss1)
        self.w_case = case_weights(self.r_case, sigma2, loss2)
        self.W = assemble_weight_matrix(self.w_cell, self.w_case, spec)
        self.value = float(np.sum(series.p * spec.diag_lengths * sigma2 ** 2
                                  * loss2(self.r_case / sigma2 ** 2)))


def _irls(series, spec, X, U, V, sigma1, sigma2, loss1, loss2, tol, max_iter):
    state = _State(series, spec, X, U, V, sigma1, sigma2, loss1, loss2)
    trace = [state.value]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        V_new = wls_update_V(state.U, state.W, X)
        U_new = wls_update_U(V_new, state.W, X)
        U_new, V_new = balance(U_new, V_new)
        prev_fit = state.fit
        state = _State(series, spec, X, U_new, V_new, sigma1, sigma2, loss1, loss2)
        trace.append(state.value)
        ref = np.linalg.norm(prev_fit)
        change = np.linalg.norm(state.fit - prev_fit)
        if change < tol * ref or change == 0:
            converged = True
            break
    return state, trace, it, converged


def _resolve_tuning(series, spec, config):
    c1, c2 = config.c1, config.c2
    if c1 is None or c2 is None:
        from .calibration import calibrate_tuning
        cc1, cc2 = calibrate_tuning(series.N, series.p, spec.L, config.delta_c,
                                    config.delta_r, config.calibration_replications,
                                    config.seed)
        c1 = cc1 if c1 is None else c1
        c2 = cc2 if c2 is None else c2
    return c1, c2


def irls_fit(series, spec, config, init=None, scales=None, losses=None):
    """Fit the diagonalwise robust rank-q approximation.

    Parameters
    ----------
    series : MultivariateSeries
    spec : EmbeddingSpec
    config : RodessaConfig
    init : LowRankFit, optional
        Starting fit; by default the best of the SVD, L1 and PCP candidates
        by M-scale of their diagonal residual norms.
    scales : (ndarray, float), optional
        Frozen ``(sigma1, sigma2)``; estimated from the starting fit if
        omitted.
    losses : (LossSpec, LossSpec), optional
        Overrides the calibrated square-root biweight losses.

    Returns
    -------
    RodessaResult
        ``converged`` is False when ``max_iter`` sweeps did not meet the
        relative change tolerance.
    """
    if spec.N != series.N:
        raise ShapeError(f"spec is for N={spec.N}, series has N={series.N}")
    q = config.rank
    traj = embed(series, spec)
    X = traj.data
    if init is None:
        init = select_initializer(traj, initial_candidates(traj, q, config.initializer))
    if init.rank != q:
        raise ValueError(f"initial fit has rank {init.rank}, config asks for {q}")
    if losses is None:
        c1, c2 = _resolve_tuning(series, spec, config)
        loss1, loss2 = LossSpec("sqrt-biweight", c1), LossSpec("sqrt-biweight", c2)
    else:
        loss1, loss2 = losses
    if scales is None:
        sigma1, sigma2 = estimate_scales(series, init, spec, loss1)
    else:
        sigma1, sigma2 = np.asarray(scales[0], dtype=float), float(scales[1])
    state, trace, it, converged = _irls(series, spec, X, init.U, init.V, sigma1, sigma2,
                                        loss1, loss2, config.tol, config.max_iter)
    if not converged:
        warnings.warn(f"IRLS did not converge in {config.max_iter} iterations",
                      ConvergenceWarning, stacklevel=2)
    fit = LowRankFit(state.U, state.V, label="rodessa", converged=converged, n_iter=it,
                     trace=tuple(trace))
    return RodessaResult(
        series=series,
        spec=spec,
        fit=fit,
        residuals=ResidualState(state.r_cell, state.r_case, sigma1, sigma2),
        weights=WeightState(state.w_cell, state.w_case, state.W),
        reconstruction=diagonal_average(fit.product, spec, series.p, like=series),
        loss1=loss1,
        loss2=loss2,
        objective_trace=tuple(trace),
        n_iter=it,
        converged=converged,
        init_label=init.label,
        config=config,
    )


def stationarity(result):
    """Norms of the block gradients of the weighted LS problem at the fit.

    The weights are those of the final fit. Returns ``(row_norms,
    col_norms)`` with one entry per row ``l`` and per column ``k``.
    """
    X = embed(result.series, result.spec).data
    U, V, W = result.fit.U, result.fit.V, result.weights.W
    R = U @ V.T - X
    col = np.linalg.norm(U.T @ (W * R), axis=0)
    row = np.linalg.norm(V.T @ (W * R).T, axis=0)
    return row, col


def refit_with_losses(series, spec, fit, sigma1, sigma2, loss1, loss2, tol=1e-6, max_iter=100):
    """Run the IRLS from ``fit`` with explicit losses and frozen scales.

    Returns ``(LowRankFit, objective_trace)``.
    """
    X = embed(series, spec).data
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularGramWarning)
        state, trace, it, converged = _irls(series, spec, X, fit.U, fit.V, sigma1, sigma2,
                                            loss1, loss2, tol, max_iter)
    return LowRankFit(state.U, state.V, label="rodessa", converged=converged, n_iter=it,
                      trace=tuple(trace)), trace
