"""Monte Carlo calibration of tuning constants and flagging thresholds,
the rank-selection curve and default window lengths.

The reference model is clean data with i.i.d. N(0, 1) errors and a fit equal
to the true signal. The residual trajectory matrix is then the Hankel
embedding of the errors, so every anti-diagonal is constant and the cell
residual norm of ``x_i^(j)`` is simply ``e_ij^2``. Scales are estimated per
replication exactly as the fit does (M-scales of the square-rooted norms).
Weights are standardized by their value at zero residual, so they lie in
[0, 1].
"""
import json
import os
import warnings
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .fit import (
    _State,
    estimate_scales,
    refit_with_losses,
    _resolve_tuning,
)
from .loss import LossSpec, mscale_rows
from .lowrank import (
    LowRankFit,
    initial_candidates,
    mad_scale,
    select_initializer,
)
from .series import embed, hankelize, round_half_up

C_BRACKET = (0.1, 50.0)
ROOT_TOL = 1e-4


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CalibrationTable:
    c1: float
    c2: float
    q_cell: float
    q_case: float
    N: int
    p: int
    L: int
    delta_c: float
    delta_r: float
    alpha: float
    replications: int
    seed: int

    def key(self):
        return _cache_key(self.N, self.p, self.L, self.delta_c, self.delta_r,
                          self.alpha, self.replications, self.seed)

    def to_json(self):
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def _cache_key(N, p, L, delta_c, delta_r, alpha, replications, seed):
    return (f"N{N}_p{p}_L{L}_dc{delta_c!r}_dr{delta_r!r}_a{alpha!r}"
            f"_R{replications}_s{seed}")


def _reference_errors(N, p, replications, seed):
    children = np.random.SeedSequence(seed).spawn(replications)
    return np.stack([np.random.default_rng(s).standard_normal((N, p)) for s in children])


def _bisect_c(mean_weight, target, what):
    lo, hi = C_BRACKET
    f_lo, f_hi = mean_weight(lo) - target, mean_weight(hi) - target
    if not (f_lo < 0 < f_hi):
        raise CalibrationError(
            f"{what}: target {target} not bracketed by c in [{lo}, {hi}] "
            f"(mean weights {f_lo + target:.4f}, {f_hi + target:.4f})")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = mean_weight(mid) - target
        if abs(f) < ROOT_TOL and hi - lo < 1e-6 * mid:
            return mid
        if f < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _standardized(t, c):
    return np.clip(1.0 - t / (c * c), 0.0, None) ** 2


class _Reference:
    """Standardized residual norms at the reference model."""

    def __init__(self, N, p, replications, seed):
        E = _reference_errors(N, p, replications, seed)
        self.r_cell = E * E
        sigma1 = mscale_rows(np.abs(E.transpose(0, 2, 1)).reshape(-1, N))
        self.s1sq = (sigma1.reshape(replications, p) ** 2)[:, None, :]
        self.t_cell = self.r_cell / self.s1sq
        self.N, self.p, self.replications = N, p, replications

    def case_t(self, c1):
        loss1 = LossSpec("sqrt-biweight", c1)
        r_case = np.mean(self.s1sq * loss1(self.t_cell), axis=2)
        sigma2 = mscale_rows(np.sqrt(r_case))
        return r_case / sigma2[:, None] ** 2


@lru_cache(maxsize=32)
def _reference(N, p, replications, seed):
    return _Reference(N, p, replications, seed)


@lru_cache(maxsize=128)
def calibrate_tuning(N, p, L, delta_c=0.9, delta_r=0.9, replications=200, seed=0):
    """Tuning constants ``(c1, c2)`` matching target mean standardized weights.

    ``c1`` is found first; ``c2`` is then calibrated on case residuals
    computed with the calibrated ``c1``.
    """
    for name, d in (("delta_c", delta_c), ("delta_r", delta_r)):
        if not 0 < d < 1:
            raise ValueError(f"{name} must lie in (0, 1), got {d}")
    if not 1 < L < N:
        raise ValueError(f"window length must satisfy 1 < L < N, got L={L}, N={N}")
    ref = _reference(N, p, replications, seed)
    c1 = _bisect_c(lambda c: float(np.mean(_standardized(ref.t_cell, c))), delta_c, "c1")
    t_case = ref.case_t(c1)
    c2 = _bisect_c(lambda c: float(np.mean(_standardized(t_case, c))), delta_r, "c2")
    return c1, c2


def reference_weights(N, p, c1, c2, replications, seed):
    """Simulated standardized cell (R x N x p) and case (R x N) weights."""
    ref = _reference(N, p, replications, seed)
    return _standardized(ref.t_cell, c1), _standardized(ref.case_t(c1), c2)


def flagging_quantiles(N, p, L, c1, c2, alpha=0.01, replications=200, seed=0):
    """alpha-quantiles of the reference-model standardized weights."""
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    w_cell, w_case = reference_weights(N, p, c1, c2, replications, seed)
    return float(np.quantile(w_cell, alpha)), float(np.quantile(w_case, alpha))


def calibration_table(N, p, L, delta_c=0.9, delta_r=0.9, alpha=0.01, replications=200,
                      seed=0, cache_dir=None):
    """Tuning constants and flagging quantiles, optionally cached on disk."""
    path = None
    if cache_dir is not None:
        key = _cache_key(N, p, L, delta_c, delta_r, alpha, replications, seed)
        path = os.path.join(cache_dir, f"calibration_{key}.json")
        if os.path.exists(path):
            with open(path) as fh:
                table = CalibrationTable.from_json(fh.read())
            if table.key() == key:
                return table
    c1, c2 = calibrate_tuning(N, p, L, delta_c, delta_r, replications, seed)
    q_cell, q_case = flagging_quantiles(N, p, L, c1, c2, alpha, replications, seed)
    table = CalibrationTable(c1, c2, q_cell, q_case, N, p, L, delta_c, delta_r, alpha,
                             replications, seed)
    if path is not None:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            fh.write(table.to_json())
        os.replace(tmp, path)
    return table


@lru_cache(maxsize=32)
def calibrate_cs_tuning(N, p, L, delta=0.9, replications=200, seed=0):
    """Biweight constant for the entrywise (CS) fit.

    At the reference model the residual trajectory matrix is the Hankel
    embedding of the errors, scaled by its MAD. ``c`` is chosen so the mean
    standardized entry weight ``(1 - (R/(c sigma))^2)_+^2`` equals ``delta``.
    """
    E = _reference_errors(N, p, replications, seed)
    t = []
    for e in E:
        R = hankelize(e, L)
        t.append((R / mad_scale(R)) ** 2)
    t = np.stack(t)
    return _bisect_c(lambda c: float(np.mean(_standardized(t, c))), delta, "cs")


def default_window(N, p, policy="auto"):
    """Window length: ``pN/(p+1)`` for few series, ``N/2`` otherwise.

    ``policy`` is ``"multivariate"``, ``"half"`` or ``"auto"`` (the former
    for ``p <= 10``).
    """
    if policy == "auto":
        policy = "multivariate" if p <= 10 else "half"
    if policy == "multivariate":
        L = round_half_up(p * N / (p + 1))
    elif policy == "half":
        L = round_half_up(N / 2)
    else:
        raise ValueError(f"unknown window policy {policy!r}")
    return max(2, min(L, N - 1))


def _warm_start(state, X):
    """Add one component along the leading singular pair of the weighted
    residual, with the step minimizing the weighted LS surrogate."""
    R = X - state.fit
    M = state.W * R
    if not np.any(M):
        return None
    Us, s, Vt = np.linalg.svd(M, full_matrices=False)
    u, v = Us[:, 0], Vt[0]
    D = np.outer(u, v)
    denom = float(np.sum(state.W * D * D))
    if denom <= 0:
        return None
    beta = float(np.sum(M * D)) / denom
    if beta <= 0:
        return None
    root = np.sqrt(beta)
    return (np.column_stack([state.U, root * u]), np.column_stack([state.V, root * v]))


def rank_curve(series, spec, config, r_max):
    """Objective of the robust fit for ranks ``1..r_max`` under common scales.

    Scales and tuning constants are fixed once, from the rank-``r_max``
    starting fit, so the values are comparable across ranks. Each rank is
    fitted from its own starting candidates and from the previous rank's
    fit extended by one component; the better of the two is kept, which
    makes the curve non-increasing.

    Returns a list of ``(r, objective)`` pairs.
    """
    traj = embed(series, spec)
    X = traj.data
    if not 1 <= r_max <= min(X.shape):
        raise ValueError(f"r_max must lie in 1..{min(X.shape)}, got {r_max}")
    c1, c2 = _resolve_tuning(series, spec, config)
    loss1, loss2 = LossSpec("sqrt-biweight", c1), LossSpec("sqrt-biweight", c2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ref_init = select_initializer(traj, initial_candidates(traj, r_max, config.initializer))
        sigma1, sigma2 = estimate_scales(series, ref_init, spec, loss1)
        curve = []
        prev = None
        for r in range(1, r_max + 1):
            init = select_initializer(traj, initial_candidates(traj, r, config.initializer))
            best, trace = refit_with_losses(series, spec, init, sigma1, sigma2, loss1, loss2,
                                            config.tol, config.max_iter)
            best_value = trace[-1]
            if prev is not None:
                state = _State(series, spec, X, prev.U, prev.V, sigma1, sigma2, loss1, loss2)
                warm = _warm_start(state, X)
                if warm is not None:
                    fit, wtrace = refit_with_losses(
                        series, spec, LowRankFit(*warm), sigma1, sigma2, loss1, loss2,
                        config.tol, config.max_iter)
                    if wtrace[-1] < best_value:
                        best, best_value = fit, wtrace[-1]
                if best_value > curve[-1][1]:
                    # no descent found from either start; the padded previous fit is as good
                    best = LowRankFit(np.column_stack([prev.U, np.zeros(prev.U.shape[0])]),
                                      np.column_stack([prev.V, np.zeros(prev.V.shape[0])]))
                    best_value = curve[-1][1]
            curve.append((r, float(best_value)))
            prev = best
    return curve

