"""Recurrent forecasting from a rank-q fit of the trajectory matrix."""
from dataclasses import dataclass

import numpy as np

from .lowrank import LowRankFit


class VerticalityError(ValueError):
    """The last coordinates of the left singular vectors have unit norm, so no
    linear recurrence of order L-1 exists."""


@dataclass(frozen=True)
class RecurrenceModel:
    """Coefficients ordered oldest to newest: ``coef[0]`` multiplies
    ``x_{i-L+1}`` and ``coef[-1]`` multiplies ``x_{i-1}``."""

    coef: np.ndarray
    verticality: float
    rank: int

    @property
    def order(self):
        return self.coef.size


def left_singular_vectors(U, V, rtol=1e-12):
    """Left singular vectors of ``U V^T`` with non-negligible singular values.

    Computed from QR factors of ``U`` and ``V`` and a q x q SVD, so the
    L x K product is never formed.
    """
    Qu, Ru = np.linalg.qr(U)
    Qv, Rv = np.linalg.qr(V)
    P, s, _ = np.linalg.svd(Ru @ Rv.T)
    if s.size == 0 or s[0] == 0:
        return Qu[:, :0], s[:0]
    keep = s > rtol * s[0]
    return (Qu @ P)[:, keep], s[keep]


def recurrence_coefficients(fit, tol=1e-8):
    """Linear recurrence coefficients from the leading left singular vectors.

    With ``u_r`` the left singular vectors of the fitted product, ``pi_r``
    their last coordinate and ``nu2 = sum pi_r^2`` the verticality, the
    coefficients are ``sum_r pi_r u_r[:L-1] / (1 - nu2)``.

    Raises
    ------
    VerticalityError
        When ``nu2 >= 1 - tol``.
    """
    U, V = (fit.U, fit.V) if isinstance(fit, LowRankFit) else fit
    Ut, _ = left_singular_vectors(U, V)
    last = Ut[-1]
    nu2 = float(last @ last)
    if nu2 >= 1.0 - tol:
        raise VerticalityError(f"verticality {nu2:.6g} too close to 1; "
                               "series not forecastable by recurrence")
    coef = Ut[:-1] @ last / (1.0 - nu2)
    return RecurrenceModel(coef, nu2, U.shape[1])


def forecast(model, reconstruction, h):
    """Continue every series ``h`` steps with the recurrence.

    The recursion is seeded with the reconstructed (not raw) values and
    extended with its own forecasts. Returns an ``h x p`` array; ``h = 0``
    gives an empty array.
    """
    values = getattr(reconstruction, "values", reconstruction)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if h < 0 or int(h) != h:
        raise ValueError(f"forecast horizon must be a non-negative integer, got {h}")
    m = model.order
    N, p = values.shape
    if N < m:
        raise ValueError(f"need at least {m} reconstructed values, got {N}")
    buf = np.empty((m + h, p))
    buf[:m] = values[N - m:]
    for s in range(h):
        buf[m + s] = model.coef @ buf[s:s + m]
    return buf[m:].copy()
