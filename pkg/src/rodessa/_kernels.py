"""Hot inner loops of the fitting code.

Two interchangeable implementations are provided: a pure-numpy one and a
numba-compiled one. The numba path is used when numba imports cleanly and
the environment variable ``RODESSA_NUMBA`` is not set to ``0``.

Kernels
-------
antidiag_sum(M, N, L, Ku, p)
    Sum of the anti-diagonal entries of each L x Ku block of ``M``; returns
    an N x p array.
wls_solve(A, W, X, rcond)
    For every column k solve the weighted normal equations
    ``(A^T W_k A) b_k = A^T W_k X_k`` through an eigendecomposition
    pseudo-inverse. Returns the K x q solution and the number of columns
    whose Gram matrix was rank deficient.
"""
import os

import numpy as np

__all__ = ["BACKEND", "antidiag_sum", "wls_solve", "numpy_impl", "numba_impl"]


class numpy_impl:
    @staticmethod
    def antidiag_sum(M, N, L, Ku, p):
        idx = (np.arange(L)[:, None] + np.arange(Ku)[None, :]).ravel()
        out = np.empty((N, p))
        for j in range(p):
            block = M[:, j * Ku:(j + 1) * Ku]
            out[:, j] = np.bincount(idx, weights=block.ravel(), minlength=N)
        return out

    @staticmethod
    def wls_solve(A, W, X, rcond):
        q = A.shape[1]
        gram = np.einsum("lk,lr,ls->krs", W, A, A, optimize=True)
        rhs = (W * X).T @ A
        evals, evecs = np.linalg.eigh(gram)
        top = evals[:, -1:]
        keep = (evals > rcond * top) & (top > 0.0)
        inv = np.where(keep, 1.0 / np.where(keep, evals, 1.0), 0.0)
        coef = np.einsum("krs,kr->ks", evecs, rhs)
        sol = np.einsum("krs,ks->kr", evecs, coef * inv)
        n_singular = int(np.count_nonzero(keep.sum(axis=1) < q))
        return sol, n_singular


numba_impl = None
try:
    if os.environ.get("RODESSA_NUMBA", "1") == "0":
        raise ImportError("numba disabled by RODESSA_NUMBA=0")
    import numba

    @numba.njit(cache=True)
    def _antidiag_sum_nb(M, N, L, Ku, p):
        out = np.zeros((N, p))
        for j in range(p):
            off = j * Ku
            for l in range(L):
                for k in range(Ku):
                    out[l + k, j] += M[l, off + k]
        return out

    @numba.njit(cache=True)
    def _chol_solve(G, b, rcond, R, Rinv, out):
        # Cholesky solve of G x = b. Returns False when the factorization
        # fails or cannot certify that every eigenvalue of G exceeds
        # rcond * lambda_max, via lambda_min >= 1 / ||R^-1||_F^2 and
        # lambda_max <= trace(G).
        q = G.shape[0]
        trace = 0.0
        for r in range(q):
            trace += G[r, r]
        if not trace > 0.0:
            return False
        for r in range(q):
            d = G[r, r]
            for t in range(r):
                d -= R[r, t] * R[r, t]
            if not d > 0.0:
                return False
            R[r, r] = np.sqrt(d)
            for s in range(r + 1, q):
                v = G[s, r]
                for t in range(r):
                    v -= R[s, t] * R[r, t]
                R[s, r] = v / R[r, r]
        fro = 0.0
        for c in range(q):
            for r in range(q):
                if r < c:
                    Rinv[r, c] = 0.0
                    continue
                v = 1.0 if r == c else 0.0
                for t in range(c, r):
                    v -= R[r, t] * Rinv[t, c]
                v /= R[r, r]
                Rinv[r, c] = v
                fro += v * v
        if not 1.0 / fro > rcond * trace:
            return False
        # x = R^-T (R^-1 b); b is overwritten with the intermediate
        for r in range(q - 1, -1, -1):
            v = 0.0
            for t in range(r + 1):
                v += Rinv[r, t] * b[t]
            b[r] = v
        for r in range(q):
            v = 0.0
            for t in range(r, q):
                v += Rinv[t, r] * b[t]
            out[r] = v
        return True

    @numba.njit(cache=True)
    def _wls_solve_nb(A, Wt, Xt, rcond):
        # Wt, Xt are K x L transposes. All K Gram matrices come from one
        # product Wt @ P, where P holds the pairwise column products of A.
        L, q = A.shape
        K = Wt.shape[0]
        T = q * (q + 1) // 2
        P = np.empty((L, T))
        pos = 0
        for r in range(q):
            for s in range(r, q):
                for l in range(L):
                    P[l, pos] = A[l, r] * A[l, s]
                pos += 1
        G = Wt @ P
        RHS = (Wt * Xt) @ A
        sol = np.zeros((K, q))
        gram = np.empty((q, q))
        R = np.zeros((q, q))
        Rinv = np.zeros((q, q))
        x = np.empty(q)
        n_singular = 0
        for k in range(K):
            pos = 0
            for r in range(q):
                for s in range(r, q):
                    gram[r, s] = G[k, pos]
                    gram[s, r] = G[k, pos]
                    pos += 1
            rhs = RHS[k].copy()
            if _chol_solve(gram, rhs.copy(), rcond, R, Rinv, x):
                sol[k, :] = x
                continue
            evals, evecs = np.linalg.eigh(gram)
            top = evals[q - 1]
            deficient = False
            for r in range(q):
                if evals[r] > rcond * top and top > 0.0:
                    c = 0.0
                    for s in range(q):
                        c += evecs[s, r] * rhs[s]
                    c /= evals[r]
                    for s in range(q):
                        sol[k, s] += evecs[s, r] * c
                else:
                    deficient = True
            if deficient:
                n_singular += 1
        return sol, n_singular

    class numba_impl:  # noqa: F811
        @staticmethod
        def antidiag_sum(M, N, L, Ku, p):
            return _antidiag_sum_nb(np.ascontiguousarray(M, dtype=np.float64),
                                    N, L, Ku, p)

        @staticmethod
        def wls_solve(A, W, X, rcond):
            return _wls_solve_nb(np.ascontiguousarray(A, dtype=np.float64),
                                 np.ascontiguousarray(np.asarray(W, dtype=np.float64).T),
                                 np.ascontiguousarray(np.asarray(X, dtype=np.float64).T),
                                 float(rcond))

except ImportError:
    numba_impl = None


if numba_impl is not None:
    BACKEND = "numba"
    antidiag_sum = numba_impl.antidiag_sum
    wls_solve = numba_impl.wls_solve
else:
    BACKEND = "numpy"
    antidiag_sum = numpy_impl.antidiag_sum
    wls_solve = numpy_impl.wls_solve
