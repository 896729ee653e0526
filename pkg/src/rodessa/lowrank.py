"""Rank-q approximations of a trajectory matrix.

These serve as starting points for the diagonalwise IRLS and as the
competing decompositions in the simulation study: classical truncated SVD,
an L1 fit, principal component pursuit, and the entrywise biweight fit.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .loss import DegenerateScaleError, MScaleConfig, mscale
from .series import TrajectoryMatrix, diagonal_means

GRAM_RCOND = 1e-12
DEGENERATE_SCALE = 1e-8


class RankError(ValueError):
    pass


class SingularGramWarning(RuntimeWarning):
    """A weighted least-squares block had a rank-deficient Gram matrix."""


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class LowRankFit:
    """Factor pair of a rank-q fit; only the product ``U @ V.T`` is identified."""

    U: np.ndarray
    V: np.ndarray
    label: str = ""
    converged: bool = True
    n_iter: int = 0
    trace: tuple = field(default=(), repr=False)

    @property
    def rank(self):
        return self.U.shape[1]

    @property
    def product(self):
        return self.U @ self.V.T


def _as_array(X):
    return X.data if isinstance(X, TrajectoryMatrix) else np.asarray(X, dtype=float)


def _check_rank(X, q):
    if not 1 <= q <= min(X.shape):
        raise RankError(f"rank {q} outside 1..{min(X.shape)} for a {X.shape[0]} x {X.shape[1]} matrix")


def balance(U, V):
    """Re-gauge ``(U, V)`` to ``(U_s D^1/2, V_s D^1/2)`` from the SVD of the product."""
    Qu, Ru = np.linalg.qr(U)
    Qv, Rv = np.linalg.qr(V)
    P, s, Rt = np.linalg.svd(Ru @ Rv.T)
    root = np.sqrt(s)
    return (Qu @ P) * root, (Qv @ Rt.T) * root


def wls_update_V(U, W, X, rcond=GRAM_RCOND):
    """Column-wise weighted LS: ``v^k = (U^T W_k U)^+ U^T W_k X_k``."""
    V, n_singular = _kernels.wls_solve(U, W, X, rcond)
    if n_singular:
        warnings.warn(f"{n_singular} column Gram matrices rank deficient; used pseudo-inverse",
                      SingularGramWarning, stacklevel=2)
    return V


def wls_update_U(V, W, X, rcond=GRAM_RCOND):
    """Row-wise weighted LS: ``u^l = (V^T W^l V)^+ V^T W^l X^l``."""
    U, n_singular = _kernels.wls_solve(V, W.T, X.T, rcond)
    if n_singular:
        warnings.warn(f"{n_singular} row Gram matrices rank deficient; used pseudo-inverse",
                      SingularGramWarning, stacklevel=2)
    return U


def weighted_objective(W, X, U, V):
    R = X - U @ V.T
    return float(np.sum(W * R * R))


def svd_lowrank(X, q):
    """Best Frobenius rank-q approximation, singular values split evenly."""
    X = _as_array(X)
    _check_rank(X, q)
    Us, s, Vt = np.linalg.svd(X, full_matrices=False)
    root = np.sqrt(s[:q])
    return LowRankFit(Us[:, :q] * root, Vt[:q].T * root, label="svd")


def _iterate_reweighted(X, q, weight_fn, objective_fn, U, V, tol, max_iter, label):
    trace = [objective_fn(X - U @ V.T)]
    fit_prev = U @ V.T
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        W = weight_fn(X - fit_prev)
        V = wls_update_V(U, W, X)
        U = wls_update_U(V, W, X)
        U, V = balance(U, V)
        fit = U @ V.T
        trace.append(objective_fn(X - fit))
        change = np.linalg.norm(fit - fit_prev)
        ref = np.linalg.norm(fit_prev)
        fit_prev = fit
        if change <= tol * ref or (ref == 0 and change == 0):
            converged = True
            break
    if not converged:
        warnings.warn(f"{label} fit did not converge in {max_iter} iterations",
                      ConvergenceWarning, stacklevel=3)
    return LowRankFit(U, V, label=label, converged=converged, n_iter=it, trace=tuple(trace))


def l1_lowrank(X, q, tol=1e-6, max_iter=200, init=None):
    """Rank-q fit minimising the sum of absolute residuals.

    Iteratively reweighted least squares with weights ``1/max(|R|, eps)``
    where ``eps = 1e-8 * ||X||_F / sqrt(LK)``. Each sweep is a
    majorize-minimize step for the eps-smoothed L1 loss, so the smoothed
    objective recorded in ``trace`` never increases.
    """
    X = _as_array(X)
    _check_rank(X, q)
    eps = 1e-8 * np.linalg.norm(X) / np.sqrt(X.size)
    if eps == 0:
        return LowRankFit(np.zeros((X.shape[0], q)), np.zeros((X.shape[1], q)), label="l1")
    start = init if init is not None else svd_lowrank(X, q)

    def smoothed_l1(R):
        a = np.abs(R)
        return float(np.sum(np.where(a >= eps, a, 0.5 * (a * a / eps + eps))))

    return _iterate_reweighted(
        X, q, lambda R: 1.0 / np.maximum(np.abs(R), eps), smoothed_l1,
        start.U, start.V, tol, max_iter, "l1")


def rpca_pcp(X, lam=None, tol=1e-7, max_iter=1000):
    """Principal component pursuit by the inexact augmented Lagrangian method.

    Approximately solves ``min ||A||_* + lam ||E||_1`` subject to
    ``A + E = X``.

    Parameters
    ----------
    X : array_like or TrajectoryMatrix
    lam : float, optional
        Sparsity weight, ``1/sqrt(max(L, K))`` by default.
    tol : float
        Stop when ``||X - A - E||_F <= tol * ||X||_F``.
    max_iter : int

    Returns
    -------
    A, E : ndarray
    info : dict
        ``converged``, ``n_iter`` and the final relative constraint residual.
    """
    X = _as_array(X)
    if lam is None:
        lam = 1.0 / np.sqrt(max(X.shape))
    norm_fro = np.linalg.norm(X)
    A = np.zeros_like(X)
    E = np.zeros_like(X)
    if norm_fro == 0:
        return A, E, {"converged": True, "n_iter": 0, "residual": 0.0}
    norm_two = np.linalg.norm(X, 2)
    Y = X / max(norm_two, np.abs(X).max() / lam)
    mu = 1.25 / norm_two
    mu_max = mu * 1e7
    factor = 1.5
    resid = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        Us, s, Vt = np.linalg.svd(X - E + Y / mu, full_matrices=False)
        s = s - 1.0 / mu
        keep = s > 0
        A = (Us[:, keep] * s[keep]) @ Vt[keep]
        T = X - A + Y / mu
        E = np.sign(T) * np.maximum(np.abs(T) - lam / mu, 0.0)
        Z = X - A - E
        Y = Y + mu * Z
        mu = min(mu * factor, mu_max)
        resid = np.linalg.norm(Z) / norm_fro
        if resid < tol:
            break
    converged = resid < tol
    if not converged:
        warnings.warn(f"PCP did not converge in {max_iter} iterations (residual {resid:.2e})",
                      ConvergenceWarning, stacklevel=2)
    return A, E, {"converged": converged, "n_iter": it, "residual": float(resid)}


def pcp_lowrank(X, q, lam=None, tol=1e-7, max_iter=1000):
    """PCP low-rank part truncated to rank q."""
    X = _as_array(X)
    _check_rank(X, q)
    A, _, info = rpca_pcp(X, lam, tol, max_iter)
    fit = svd_lowrank(A, q)
    return LowRankFit(fit.U, fit.V, label="pcp", converged=info["converged"],
                      n_iter=info["n_iter"])


def mad_scale(R):
    R = np.asarray(R, dtype=float).ravel()
    return 1.482602218505602 * float(np.median(np.abs(R - np.median(R))))


def biweight_lowrank(X, q, c, init=None, scale=None, tol=1e-6, max_iter=200):
    """Entrywise biweight rank-q fit: minimise ``sum rho_c(R_lk / sigma)``.

    ``sigma`` is the MAD of the residuals of the starting fit unless given.
    Weights ``(1 - (R/(c sigma))^2)_+^2`` make each sweep a
    majorize-minimize step (``rho_c(sqrt(.))`` is concave), so the objective
    in ``trace`` is non-increasing.
    """
    X = _as_array(X)
    _check_rank(X, q)
    start = init if init is not None else svd_lowrank(X, q)
    if scale is None:
        scale = mad_scale(X - start.product)
    if not scale > 0:
        return LowRankFit(start.U, start.V, label="biweight", trace=(0.0,))
    cs = c * scale

    def weights(R):
        u = np.minimum((R / cs) ** 2, 1.0)
        return (1.0 - u) ** 2

    def objective(R):
        u = np.minimum((R / cs) ** 2, 1.0)
        return float(np.sum(1.0 - (1.0 - u) ** 3))

    return _iterate_reweighted(X, q, weights, objective, start.U, start.V,
                               tol, max_iter, "biweight")


def candidate_scores(X, candidates, cfg=MScaleConfig()):
    """M-scale of the pooled diagonal residual norms of every candidate.

    A candidate whose score falls below ``1e-8`` times the RMS of the data
    (an exact fit up to rounding) scores 0.
    """
    floor = DEGENERATE_SCALE * float(np.sqrt(np.mean(X.data ** 2)))
    scores = []
    for fit in candidates:
        R = X.data - fit.product
        r_cell = np.maximum(diagonal_means(R * R, X.spec, X.p), 0.0)
        try:
            s = mscale(np.sqrt(r_cell), cfg)
        except DegenerateScaleError:
            s = 0.0
        scores.append(s if s >= floor else 0.0)
    return scores


def select_initializer(X, candidates, cfg=MScaleConfig()):
    """Candidate with the smallest M-scale of its diagonal residual norms.

    Ties go to the earlier candidate. If every candidate is degenerate the
    SVD fit is returned with a warning.
    """
    if not candidates:
        raise ValueError("need at least one candidate fit")
    if len(candidates) == 1:
        return candidates[0]
    scores = candidate_scores(X, candidates, cfg)
    if all(s == 0.0 for s in scores):
        warnings.warn("all initial candidates have degenerate residual scale; using SVD fit",
                      ConvergenceWarning, stacklevel=2)
        for fit in candidates:
            if fit.label == "svd":
                return fit
        return svd_lowrank(X, candidates[0].rank)
    best = 0
    for k, s in enumerate(scores):
        if s < scores[best]:
            best = k
    return candidates[best]


def initial_candidates(X, q, policy="auto"):
    """Starting fits in the fixed order SVD, L1, PCP."""
    svd = svd_lowrank(X, q)
    if policy == "svd":
        return [svd]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        warnings.simplefilter("ignore", SingularGramWarning)
        if policy == "l1":
            return [l1_lowrank(X, q, init=svd)]
        if policy == "pcp":
            return [pcp_lowrank(X, q)]
        if policy != "auto":
            raise ValueError(f"unknown initializer policy {policy!r}")
        return [svd, l1_lowrank(X, q, init=svd), pcp_lowrank(X, q)]
