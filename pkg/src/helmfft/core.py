"""Grids, boundary kinds, and the structured 1D matrices shared by all solvers.

Field vectors are plain 1-D complex ndarrays of length N = prod(n_j), stored in
lexicographic order with x_1 slowest and x_d fastest.  With that ordering a
Kronecker factor acting on direction j applies along axis j of the reshaped
``(n_1, ..., n_d)`` array, and "(F_1 otimes I)" products act on contiguous
slabs.  All scalars are complex double precision throughout, even for purely
real matrices, so there is a single code path.
"""

from __future__ import annotations

import ctypes
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class BoundaryKind(Enum):
    ABSORBING = "absorbing"
    NEUMANN = "neumann"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the unit d-rectangle, n_j points per direction."""

    n: tuple[int, ...]

    def __post_init__(self):
        n = tuple(int(k) for k in self.n)
        object.__setattr__(self, "n", n)
        if len(n) not in (2, 3):
            raise ValueError(f"grid must be 2- or 3-dimensional, got {len(n)} directions")
        if any(k < 3 for k in n):
            raise ValueError(f"need at least 3 points per direction, got {n}")

    @property
    def dims(self) -> int:
        return len(self.n)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(1.0 / (k - 1) for k in self.n)

    @property
    def npoints(self) -> int:
        N = 1
        for k in self.n:
            N *= k
        return N

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n


def lex_index(grid: Grid, multi_index) -> int:
    """Flat index of a 1-based multi-index (x_1 slowest, x_d fastest)."""
    idx = tuple(multi_index)
    if len(idx) != grid.dims:
        raise IndexError(f"expected {grid.dims} indices, got {len(idx)}")
    flat = 0
    for i, n in zip(idx, grid.n):
        if not 1 <= i <= n:
            raise IndexError(f"index {idx} out of range for grid {grid.n}")
        flat = flat * n + (i - 1)
    return flat


def unlex_index(grid: Grid, flat: int) -> tuple[int, ...]:
    """Inverse of :func:`lex_index`; returns the 1-based multi-index."""
    if not 0 <= flat < grid.npoints:
        raise IndexError(f"flat index {flat} out of range for grid {grid.n}")
    out = []
    for n in reversed(grid.n):
        out.append(flat % n + 1)
        flat //= n
    return tuple(reversed(out))


class TriCornerMatrix:
    """Symmetric tridiagonal matrix with (optionally) equal wrap-around corners.

    Covers every 1D matrix used here: stiffness/mass pencils with Neumann or
    absorbing boundary rows (corner = 0) and their periodic circulant
    counterparts (corner != 0).  Symmetry is structural: only one off-diagonal
    and one corner value are stored.
    """

    __slots__ = ("n", "diag", "off", "corner")

    def __init__(self, diag, off, corner=0.0):
        self.diag = np.asarray(diag, dtype=np.complex128)
        self.off = np.asarray(off, dtype=np.complex128)
        self.n = self.diag.shape[0]
        if self.off.shape != (self.n - 1,):
            raise ValueError(f"off-diagonal must have length {self.n - 1}, got {self.off.shape}")
        self.corner = complex(corner)
        self.diag.flags.writeable = False
        self.off.flags.writeable = False

    # Aliases for the symmetric pairs; kept so callers can speak in terms of
    # the full matrix layout.
    @property
    def sub(self):
        return self.off

    @property
    def super(self):
        return self.off

    @property
    def corner_lo_hi(self) -> complex:
        return self.corner

    @property
    def corner_hi_lo(self) -> complex:
        return self.corner

    @property
    def max_abs(self) -> float:
        m = max(np.abs(self.diag).max(), np.abs(self.off).max())
        return float(max(m, abs(self.corner)))

    _CHUNK = 1 << 21  # complex scalars of off-diagonal scratch in the out= path

    def apply(self, x: np.ndarray, axis: int = 0, out=None) -> np.ndarray:
        """Apply the matrix along ``axis`` of ``x``.

        With ``out`` given (must not alias ``x``), scratch stays bounded so
        repeated applications do not inflate the peak memory of a solve.
        """
        x = np.asarray(x)
        if x.shape[axis] != self.n:
            raise ValueError(f"axis {axis} has length {x.shape[axis]}, matrix is {self.n}")
        xm = np.moveaxis(x, axis, 0)
        shp = (self.n,) + (1,) * (xm.ndim - 1)
        o = self.off.reshape((self.n - 1,) + shp[1:])
        if out is None:
            ym = self.diag.reshape(shp) * xm
            ym[1:] += o * xm[:-1]
            ym[:-1] += o * xm[1:]
        else:
            ym = np.moveaxis(out, axis, 0)
            np.multiply(self.diag.reshape(shp), xm, out=ym)
            rest = max(1, xm[0].size)
            step = max(1, self._CHUNK // rest)
            for s in range(0, self.n - 1, step):
                e = min(self.n - 1, s + step)
                ym[1 + s:1 + e] += o[s:e] * xm[s:e]
                ym[s:e] += o[s:e] * xm[1 + s:1 + e]
        if self.corner != 0.0:
            ym[0] += self.corner * xm[-1]
            ym[-1] += self.corner * xm[0]
        return np.moveaxis(ym, 0, axis)

    def dense(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=np.complex128)
        np.fill_diagonal(A, self.diag)
        idx = np.arange(self.n - 1)
        A[idx, idx + 1] = self.off
        A[idx + 1, idx] = self.off
        A[0, -1] += self.corner
        A[-1, 0] += self.corner
        return A

    def __repr__(self):
        return f"TriCornerMatrix(n={self.n}, corner={self.corner})"


@dataclass(frozen=True)
class KroneckerOperator:
    """Sum of scaled Kronecker products of per-direction TriCornerMatrix factors.

    ``terms`` is a sequence of ``(coeff, (F_1, ..., F_d))`` entries.  The
    operator is applied matrix-free; nothing dense is ever formed here.
    """

    grid: Grid
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        for coeff, factors in self.terms:
            if len(factors) != self.grid.dims:
                raise ValueError("every term needs exactly one factor per direction")
            for F, n in zip(factors, self.grid.n):
                if F.n != n:
                    raise ValueError(f"factor size {F.n} does not match grid {self.grid.n}")

    def apply(self, x: np.ndarray, out=None) -> np.ndarray:
        return kron_apply(self, x, out=out)

    def dense(self) -> np.ndarray:
        """Explicit N x N matrix; intended for small verification problems."""
        N = self.grid.npoints
        A = np.zeros((N, N), dtype=np.complex128)
        for coeff, factors in self.terms:
            term = np.array([[1.0 + 0j]])
            for F in factors:
                term = np.kron(term, F.dense())
            A += coeff * term
        return A


def kron_apply(op: KroneckerOperator, x: np.ndarray, out=None) -> np.ndarray:
    """Evaluate ``sum_t c_t (F_1 ox ... ox F_d) x`` without dense matrices.

    ``x`` is a field vector of length N (or the reshaped d-dim array); the
    result has the same shape as ``x``.  Cost is O(N d) per term.
    """
    x = np.asarray(x, dtype=np.complex128)
    flat = x.ndim == 1
    shape = op.grid.shape
    N = op.grid.npoints
    if flat:
        if x.shape[0] != N:
            raise ValueError(f"field vector has length {x.shape[0]}, grid needs {N}")
        X = x.reshape(shape)
    else:
        if x.shape != shape:
            raise ValueError(f"field array has shape {x.shape}, grid is {shape}")
        X = x
    if out is None:
        acc = np.zeros(shape, dtype=np.complex128)
    else:
        acc = out.reshape(shape)
        acc[...] = 0.0
    for coeff, factors in op.terms:
        term = X
        for axis, F in enumerate(factors):
            term = F.apply(term, axis=axis)
        acc += coeff * term
    return acc.reshape(-1) if flat else acc


def tune_allocator(threshold: int = 1 << 30) -> bool:
    """Keep large freed blocks reusable instead of returning them to the OS.

    glibc mmaps/munmaps every allocation above ~128 KiB by default, which makes
    each fresh multi-MB scratch array pay a page-fault storm.  Raising the mmap
    and trim thresholds lets repeated solves reuse the heap.  No-op (returns
    False) on non-glibc platforms.
    """
    try:
        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        ok1 = libc.mallopt(-1, threshold)  # M_TRIM_THRESHOLD
        ok2 = libc.mallopt(-3, threshold)  # M_MMAP_THRESHOLD
        return bool(ok1 and ok2)
    except (OSError, AttributeError):
        return False
