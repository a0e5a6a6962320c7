"""Batched LU kernels for the shifted tridiagonal diagonal blocks.

Every diagonal block has the form ``coeff * M + K`` where (K, M) is one 1D
pencil shared by all blocks and ``coeff`` varies per block (an eigenvalue
minus a shift).  Factorization is LU without pivoting, storing reciprocal
pivots only; off-diagonal entries are two flops and are recomputed inside the
sweeps, which keeps factor storage at one array of block-system size.  A pivot
whose magnitude falls below ``tol * max|block|`` raises :class:`SingularBlock`
instead of being repaired silently.

Arrays are laid out with the tridiagonal index first: ``X[i]`` holds the i-th
unknown of every block at once, so the sweeps stream contiguous slabs.  The
inner loops are JIT-compiled when numba is importable; a pure-numpy fallback
keeps the package functional (just slower for skinny blocks) without it.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

PIVOT_RTOL = 1e-14

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the forced fallback test
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


class SingularBlock(RuntimeError):
    """A diagonal block of the transformed system is numerically singular."""

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class BlockFactors(NamedTuple):
    coeff: np.ndarray   # per-block shift coefficients, batch shape
    rd: np.ndarray      # reciprocal pivots, (m,) + batch shape


@njit(cache=True)
def _factor_kernel(coeff, Kd, Ko, Md, Mo, rd, amin):
    m = Kd.shape[0]
    B = coeff.shape[0]
    for b in range(B):
        d = coeff[b] * Md[0] + Kd[0]
        rd[0, b] = 1.0 / d
        amin[b] = abs(d)
    for i in range(1, m):
        for b in range(B):
            o = coeff[b] * Mo[i - 1] + Ko[i - 1]
            d = coeff[b] * Md[i] + Kd[i] - o * o * rd[i - 1, b]
            a = abs(d)
            if a < amin[b]:
                amin[b] = a
            rd[i, b] = 1.0 / d


@njit(cache=True)
def _solve_kernel(coeff, Ko, Mo, rd, X):
    m, B = X.shape
    for i in range(1, m):
        for b in range(B):
            o = coeff[b] * Mo[i - 1] + Ko[i - 1]
            X[i, b] -= o * rd[i - 1, b] * X[i - 1, b]
    for b in range(B):
        X[m - 1, b] *= rd[m - 1, b]
    for i in range(m - 2, -1, -1):
        for b in range(B):
            o = coeff[b] * Mo[i] + Ko[i]
            X[i, b] = (X[i, b] - o * X[i + 1, b]) * rd[i, b]


def _factor_numpy(coeff, Kd, Ko, Md, Mo, rd, amin):
    m = Kd.shape[0]
    t = np.empty(coeff.shape, dtype=np.complex128)
    np.multiply(coeff, Md[0], out=rd[0])
    rd[0] += Kd[0]
    np.abs(rd[0], out=amin)
    for i in range(1, m):
        np.multiply(coeff, Mo[i - 1], out=t)
        t += Ko[i - 1]
        t *= t
        t *= rd[i - 1]
        np.multiply(coeff, Md[i], out=rd[i])
        rd[i] += Kd[i]
        rd[i] -= t
        np.minimum(amin, np.abs(rd[i]), out=amin)
    for i in range(m):
        np.reciprocal(rd[i], out=rd[i])


def _solve_numpy(coeff, Ko, Mo, rd, X):
    m = X.shape[0]
    t = np.empty_like(X[0])
    for i in range(1, m):
        np.multiply(coeff, Mo[i - 1], out=t)
        t += Ko[i - 1]
        t *= rd[i - 1]
        t *= X[i - 1]
        X[i] -= t
    X[m - 1] *= rd[m - 1]
    for i in range(m - 2, -1, -1):
        np.multiply(coeff, Mo[i], out=t)
        t += Ko[i]
        t *= X[i + 1]
        X[i] -= t
        X[i] *= rd[i]


def factor_blocks(coeff, K, M, tol=PIVOT_RTOL, out=None) -> BlockFactors:
    """LU of ``coeff*M + K`` for every block; raises SingularBlock on a tiny pivot."""
    coeff = np.ascontiguousarray(coeff, dtype=np.complex128)
    batch = coeff.shape
    m = K.diag.shape[0]
    rd = out if out is not None else np.empty((m,) + batch, dtype=np.complex128)
    amin = np.empty(batch, dtype=np.float64)
    cflat = coeff.reshape(-1)
    if HAVE_NUMBA:
        _factor_kernel(cflat, K.diag, K.off, M.diag, M.off,
                       rd.reshape(m, -1), amin.reshape(-1))
    else:
        _factor_numpy(cflat, K.diag, K.off, M.diag, M.off,
                      rd.reshape(m, -1), amin.reshape(-1))
    bmax = np.abs(coeff) * M.max_abs + K.max_abs
    bad = amin < tol * bmax
    if bad.any():
        idx = np.unravel_index(int(np.argmax(bad)), batch)
        block = idx[0] if len(idx) == 1 else idx
        raise SingularBlock(
            f"near-singular diagonal block {block} (resonant shift); "
            f"min pivot {amin[idx]:.3e}", block=block)
    return BlockFactors(coeff=coeff, rd=rd)


def solve_blocks(factors: BlockFactors, K, M, X):
    """Solve all blocks in place; X has shape (m,) + batch."""
    m = X.shape[0]
    X2 = X.reshape(m, -1)
    if HAVE_NUMBA:
        _solve_kernel(factors.coeff.reshape(-1), K.off, M.off,
                      factors.rd.reshape(m, -1), X2)
    else:
        _solve_numpy(factors.coeff.reshape(-1), K.off, M.off,
                     factors.rd.reshape(m, -1), X2)
    return X
