"""Multivariate series container, stacked-Hankel embedding and diagonal
averaging.

Domain functions use 1-based time/series indices (``i`` in 1..N, ``j`` in
1..p); arrays are stored 0-based.
"""
import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels


class WindowError(ValueError):
    """Window length incompatible with the series length."""


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class MultivariateSeries:
    """p series of common length N, stored as an N x p matrix."""

    values: np.ndarray
    names: tuple = ()
    timestamps: tuple = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ShapeError("values must be an N x p matrix")
        N, p = values.shape
        if N < 2 or p < 1:
            raise ShapeError(f"need N >= 2 and p >= 1, got N={N}, p={p}")
        if not np.all(np.isfinite(values)):
            raise ValueError("series contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        names = tuple(self.names) if self.names else tuple(
            f"x{j + 1}" for j in range(p))
        if len(names) != p:
            raise ShapeError(f"{len(names)} names for {p} series")
        object.__setattr__(self, "names", names)
        if self.timestamps is not None:
            ts = tuple(self.timestamps)
            if len(ts) != N:
                raise ShapeError(f"{len(ts)} timestamps for {N} time points")
            object.__setattr__(self, "timestamps", ts)

    @property
    def N(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    def with_values(self, values):
        return MultivariateSeries(values, self.names, self.timestamps)


@dataclass(frozen=True)
class EmbeddingSpec:
    """Window length ``L`` for series of length ``N``."""

    N: int
    L: int

    def __post_init__(self):
        if not (1 < self.L < self.N):
            raise WindowError(
                f"window length must satisfy 1 < L < N, got L={self.L}, N={self.N}")

    @property
    def Ku(self):
        return self.N - self.L + 1

    def K(self, p):
        return p * self.Ku

    def n(self, i):
        """Length of anti-diagonal ``i`` (1-based)."""
        return min(i, self.L, self.Ku, self.N - i + 1)

    @property
    def diag_lengths(self):
        return _diag_lengths(self.N, self.L)


@lru_cache(maxsize=64)
def _diag_lengths(N, L):
    i = np.arange(1, N + 1)
    out = np.minimum(np.minimum(i, L), np.minimum(N - L + 1, N - i + 1)).astype(float)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _hankel_index(N, L):
    # 0-based time index of entry (l, k) of one L x Ku block
    idx = np.arange(L)[:, None] + np.arange(N - L + 1)[None, :]
    idx.setflags(write=False)
    return idx


@dataclass(frozen=True)
class TrajectoryMatrix:
    data: np.ndarray
    spec: EmbeddingSpec
    p: int

    def block(self, j):
        """Hankel block of series ``j`` (1-based)."""
        Ku = self.spec.Ku
        return self.data[:, (j - 1) * Ku:j * Ku]


@dataclass(frozen=True)
class DiagonalIndex:
    i: int
    j: int
    n_i: int
    cells: tuple = field(default_factory=tuple)


def embed(series, spec):
    """Stacked-Hankel trajectory matrix of ``series``.

    Block ``j`` holds the ``Ku`` lagged vectors of series ``j``, so that
    entry ``(l, k)`` (1-based, within the block) equals ``x_{l+k-1}``.
    """
    values = series.values if isinstance(series, MultivariateSeries) else np.asarray(series, float)
    if values.ndim == 1:
        values = values[:, None]
    N, p = values.shape
    if spec.N != N:
        raise WindowError(f"embedding spec is for N={spec.N}, series has N={N}")
    return TrajectoryMatrix(hankelize(values, spec.L), spec, p)


def hankelize(values, L):
    """Raw stacked-Hankel array for an N x p array of per-time quantities."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    N, p = values.shape
    idx = _hankel_index(N, L)
    return np.concatenate([values[idx, j] for j in range(p)], axis=1)


def antidiagonal_cells(i, j, spec, p):
    """All global (l, k) positions of anti-diagonal ``i`` in block ``j``.

    Positions are 1-based and ordered by ``a = 1..n_i``.
    """
    N, L, Ku = spec.N, spec.L, spec.Ku
    if not 1 <= i <= N:
        raise IndexError(f"time index {i} outside 1..{N}")
    if not 1 <= j <= p:
        raise IndexError(f"series index {j} outside 1..{p}")
    n_i = spec.n(i)
    cells = tuple(
        (min(L, i) + 1 - a, min(Ku, i) - (n_i - a) + Ku * (j - 1))
        for a in range(1, n_i + 1)
    )
    return DiagonalIndex(i, j, n_i, cells)


def diagonal_sums(M, spec, p):
    """Anti-diagonal sums of every block of an L x K matrix, as N x p."""
    M = np.asarray(M, dtype=float)
    if M.shape != (spec.L, spec.K(p)):
        raise ShapeError(
            f"expected a {spec.L} x {spec.K(p)} matrix, got {M.shape[0]} x {M.shape[1]}")
    return _kernels.antidiag_sum(M, spec.N, spec.L, spec.Ku, p)


def diagonal_means(M, spec, p):
    return diagonal_sums(M, spec, p) / spec.diag_lengths[:, None]


def diagonal_average(fit, spec, p, like=None):
    """Hankelize an L x K matrix back to an N x p series."""
    values = diagonal_means(fit, spec, p)
    if like is not None:
        return like.with_values(values)
    return MultivariateSeries(values)


def predicted_cell(U, V, i, a, j, spec):
    """Fitted value of cell ``a`` on anti-diagonal ``i`` of block ``j``."""
    n_i = spec.n(i)
    if not 1 <= a <= n_i:
        raise IndexError(f"cell {a} outside 1..{n_i} on anti-diagonal {i}")
    i_star = min(spec.L, i) + 1 - a
    a_star = min(spec.Ku, i) - (n_i - a) + spec.Ku * (j - 1)
    return float(np.dot(U[i_star - 1], V[a_star - 1]))


# --- CSV ------------------------------------------------------------------

def read_csv(path):
    """Load a series from CSV.

    The header row names the series. A first column headed ``time``
    (case-insensitive) is taken as timestamps. Lines starting with ``#``
    are skipped.
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh)
                if row and not row[0].lstrip().startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    has_time = header[0].lower() == "time"
    names = header[1:] if has_time else header
    if not names:
        raise ValueError(f"{path}: no series columns")
    stamps, data = [], []
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        if has_time:
            stamps.append(row[0].strip())
            row = row[1:]
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return MultivariateSeries(np.array(data, dtype=float).reshape(len(data), len(names)),
                              tuple(names), tuple(stamps) if has_time else None)


def format_float(x):
    return repr(float(x))


def write_csv(path, series, comment=None, values=None, timestamps=None):
    """Write ``series`` (or ``values`` with the series' names) to CSV."""
    values = series.values if values is None else np.asarray(values)
    if timestamps is None:
        timestamps = series.timestamps
    with open(path, "w", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        header = list(series.names)
        if timestamps is not None:
            header = ["time"] + header
        writer.writerow(header)
        for i, row in enumerate(values):
            cells = [format_float(v) for v in row]
            if timestamps is not None:
                cells = [timestamps[i]] + cells
            writer.writerow(cells)


def round_half_up(x):
    return int(math.floor(x + 0.5))
