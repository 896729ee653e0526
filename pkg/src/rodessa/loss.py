"""Robust rho functions and the M-estimator of scale.

Kinds
-----
``biweight``
    Tukey's biweight ``1 - (1 - t^2/c^2)^3`` for ``|t| <= c``, else 1.
``huber``
    ``t^2/2`` for ``|t| <= b``, else ``b|t| - b^2/2``.
``sqrt-biweight``
    ``rho_c(sqrt(t))`` for ``t >= 0``: the concave form applied to squared
    residual norms.
``sqrt-huber``
    ``rho_b(sqrt(t))``, also concave on ``t >= 0``.
``absolute``
    ``|t|``; with this loss the diagonalwise objective collapses to the
    Frobenius objective.
"""
import math
from dataclasses import dataclass

import numpy as np

BIWEIGHT_C = 4.685
HUBER_B = 1.345
MSCALE_C = 1.548
MSCALE_DELTA = 0.5

_KINDS = ("biweight", "huber", "sqrt-biweight", "sqrt-huber", "absolute")


class DegenerateScaleError(ValueError):
    """The sample carries no scale information (too many zeros)."""


class ScaleConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossSpec:
    kind: str = "sqrt-biweight"
    tuning: float = BIWEIGHT_C

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; choose from {_KINDS}")
        if not self.tuning > 0:
            raise ValueError(f"tuning constant must be positive, got {self.tuning}")

    def __call__(self, t):
        return rho(self, t)

    def derivative(self, t):
        return rho_prime(self, t)

    @property
    def max_weight(self):
        """Derivative at zero; the largest weight the loss can hand out."""
        return float(rho_prime(self, 0.0))


def sqrt_biweight(c):
    return LossSpec("sqrt-biweight", c)


def _check_nonneg(spec, t):
    if spec.kind.startswith("sqrt") and np.any(t < 0):
        raise ValueError(f"{spec.kind} is defined for t >= 0 only")


def rho(spec, t):
    t = np.asarray(t, dtype=float)
    _check_nonneg(spec, t)
    c = spec.tuning
    if spec.kind == "biweight":
        u = np.minimum((t / c) ** 2, 1.0)
        out = 1.0 - (1.0 - u) ** 3
    elif spec.kind == "sqrt-biweight":
        u = np.minimum(t / (c * c), 1.0)
        out = 1.0 - (1.0 - u) ** 3
    elif spec.kind == "huber":
        a = np.abs(t)
        out = np.where(a <= c, 0.5 * t * t, c * a - 0.5 * c * c)
    elif spec.kind == "sqrt-huber":
        out = np.where(t <= c * c, 0.5 * t, c * np.sqrt(t) - 0.5 * c * c)
    else:
        out = np.abs(t)
    return out if out.ndim else float(out)


def rho_prime(spec, t):
    t = np.asarray(t, dtype=float)
    _check_nonneg(spec, t)
    c = spec.tuning
    if spec.kind == "biweight":
        u = np.minimum((t / c) ** 2, 1.0)
        out = 6.0 * t / (c * c) * (1.0 - u) ** 2
    elif spec.kind == "sqrt-biweight":
        u = np.minimum(t / (c * c), 1.0)
        out = 3.0 / (c * c) * (1.0 - u) ** 2
    elif spec.kind == "huber":
        out = np.clip(t, -c, c)
    elif spec.kind == "sqrt-huber":
        out = np.where(t <= c * c, 0.5, 0.5 * c / np.sqrt(np.maximum(t, c * c)))
    else:
        out = np.sign(t)
        out = np.where(t == 0, 1.0, out)
    return out if out.ndim else float(out)


def rho_second(spec, t):
    """Second derivative; only the square-root kinds are supported."""
    t = np.asarray(t, dtype=float)
    _check_nonneg(spec, t)
    c = spec.tuning
    if spec.kind == "sqrt-biweight":
        out = np.where(t <= c * c, -6.0 / c ** 4 * (1.0 - t / (c * c)), 0.0)
    elif spec.kind == "sqrt-huber":
        out = np.where(t <= c * c, 0.0, -0.25 * c * np.maximum(t, c * c) ** -1.5)
    else:
        raise ValueError(f"rho_second not available for {spec.kind}")
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class MScaleConfig:
    delta: float = MSCALE_DELTA
    c: float = MSCALE_C
    rtol: float = 1e-10
    max_iter: int = 200
    residual_tol: float = 1e-8

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


_DEFAULT_MSCALE = MScaleConfig()


def _mean_rho(z, sigma, c):
    u = np.minimum((z / (sigma * c)) ** 2, 1.0)
    return float(np.mean(1.0 - (1.0 - u) ** 3))


def mscale(values, cfg=_DEFAULT_MSCALE):
    """M-estimator of scale with Tukey's biweight.

    Solves ``mean(rho_c(z / sigma)) = delta`` for ``sigma`` by bisection in
    log-sigma. The left-hand side is continuous and non-increasing in sigma,
    so a bracketed root is unique up to flat stretches.

    Parameters
    ----------
    values : array_like
        Non-negative sample ``z_1..z_n`` (signs are ignored).
    cfg : MScaleConfig, optional
        ``delta = 0.5`` and ``c = 1.548`` by default, giving a 50% breakdown
        point and consistency for ``|N(0, 1)|`` data.

    Returns
    -------
    float

    Raises
    ------
    DegenerateScaleError
        If at most a fraction ``delta`` of the values is non-zero, in which
        case the solution collapses to zero.
    ScaleConvergenceError
        If no sign change is found or the final equation residual exceeds
        ``cfg.residual_tol``.
    """
    z = np.abs(np.asarray(values, dtype=float).ravel())
    if z.size == 0:
        raise ValueError("mscale needs at least one value")
    if not np.all(np.isfinite(z)):
        raise ValueError("mscale input contains non-finite values")
    positive = z[z > 0]
    if positive.size <= cfg.delta * z.size:
        raise DegenerateScaleError(
            f"{z.size - positive.size} of {z.size} values are zero; scale is degenerate")
    c, delta = cfg.c, cfg.delta
    lo = positive.min() / c
    hi = positive.max() * 10.0
    for _ in range(60):
        if _mean_rho(z, lo, c) > delta:
            break
        lo *= 0.5
    for _ in range(60):
        if _mean_rho(z, hi, c) < delta:
            break
        hi *= 2.0
    f_lo, f_hi = _mean_rho(z, lo, c) - delta, _mean_rho(z, hi, c) - delta
    if not (f_lo > 0 > f_hi):
        raise ScaleConvergenceError(
            f"no sign change on [{lo:g}, {hi:g}]: {f_lo:g}, {f_hi:g}")
    log_lo, log_hi = math.log(lo), math.log(hi)
    for _ in range(cfg.max_iter):
        mid = 0.5 * (log_lo + log_hi)
        f = _mean_rho(z, math.exp(mid), c) - delta
        if f > 0:
            log_lo = mid
        elif f < 0:
            log_hi = mid
        else:
            log_lo = log_hi = mid
            break
        if log_hi - log_lo < cfg.rtol:
            break
    sigma = math.exp(0.5 * (log_lo + log_hi))
    resid = abs(_mean_rho(z, sigma, c) - delta)
    if resid >= cfg.residual_tol:
        raise ScaleConvergenceError(
            f"M-scale equation residual {resid:.3e} above {cfg.residual_tol:g}")
    return sigma


def _mean_rho_rows(Z, sigma, c):
    u = np.minimum((Z / (sigma[:, None] * c)) ** 2, 1.0)
    return np.mean(1.0 - (1.0 - u) ** 3, axis=1)


def mscale_rows(Z, cfg=_DEFAULT_MSCALE):
    """Row-wise :func:`mscale` of a 2-d array, bisecting all rows at once."""
    Z = np.abs(np.asarray(Z, dtype=float))
    if Z.ndim != 2 or Z.shape[1] == 0:
        raise ValueError("mscale_rows needs a non-empty 2-d array")
    n_pos = np.count_nonzero(Z > 0, axis=1)
    if np.any(n_pos <= cfg.delta * Z.shape[1]):
        raise DegenerateScaleError("a row has too many zero values for an M-scale")
    c, delta = cfg.c, cfg.delta
    lo = np.where(Z > 0, Z, np.inf).min(axis=1) / c
    hi = Z.max(axis=1) * 10.0
    for _ in range(60):
        bad = _mean_rho_rows(Z, lo, c) <= delta
        if not bad.any():
            break
        lo = np.where(bad, lo * 0.5, lo)
    for _ in range(60):
        bad = _mean_rho_rows(Z, hi, c) >= delta
        if not bad.any():
            break
        hi = np.where(bad, hi * 2.0, hi)
    log_lo, log_hi = np.log(lo), np.log(hi)
    for _ in range(cfg.max_iter):
        mid = 0.5 * (log_lo + log_hi)
        f = _mean_rho_rows(Z, np.exp(mid), c) - delta
        log_lo = np.where(f >= 0, mid, log_lo)
        log_hi = np.where(f <= 0, mid, log_hi)
        if np.max(log_hi - log_lo) < cfg.rtol:
            break
    sigma = np.exp(0.5 * (log_lo + log_hi))
    resid = np.abs(_mean_rho_rows(Z, sigma, c) - delta)
    if np.any(resid >= cfg.residual_tol):
        raise ScaleConvergenceError(
            f"M-scale equation residual {resid.max():.3e} above {cfg.residual_tol:g}")
    return sigma
