"""Eigen-infrastructure: circulant closed forms, the complex-symmetric pencil
eigensolver, normalization, and the batched line transforms.

Conventions (validated end-to-end against the dense oracle):

* Periodic (circulant) pencils are diagonalized by the unnormalized DFT.  The
  analysis side is ``s * fft(.)`` along the lines and the synthesis side is
  ``n * ifft(s * .)``, with per-mode scales ``s_l = 1/sqrt(n mu_l)`` where
  ``mu_l`` is the circulant mass eigenvalue.  Under this pairing the
  transformed block system is exactly ``(Lambda_l - sigma) M + K`` per mode.
  Boundary-restricted products on this basis pair a row restriction with its
  complex conjugate (the DFT columns are not orthogonal under the plain
  transpose; conjugation is what the FFT realization implements).
* Numeric pencils (Neumann / absorbing) are diagonalized by a dense solve and
  T-normalized so that V^T M V = I; their restricted products pair a row
  restriction with its plain transpose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.linalg

from .assembly import Pencil1D
from .core import BoundaryKind

NORMALIZATION_TOL = 1e-12


class EigensolverFailure(RuntimeError):
    """Dense eigensolver did not converge."""


class NormalizationFailure(RuntimeError):
    """An eigenvector has a quasi-null T-norm and cannot be M-normalized."""


def dft_entry(n: int, k: int, l: int) -> complex:
    """Entry (k, l), 1-based, of the unnormalized n-point DFT matrix."""
    if not (1 <= k <= n and 1 <= l <= n):
        raise IndexError(f"indices ({k}, {l}) out of range for n={n}")
    return complex(np.exp(-2j * np.pi * (k - 1) * (l - 1) / n))


def circulant_eigenvalues(pencil: Pencil1D) -> np.ndarray:
    """Generalized eigenvalues of a periodic (circulant) pencil, mode-ordered.

    Mode l has angle theta_l = 2 pi (l-1)/n; the value is the ratio of the
    stiffness and mass circulant symbols at that angle.
    """
    lam, _mu = _circulant_pair(pencil)
    return lam


def circulant_mass_eigenvalues(pencil: Pencil1D) -> np.ndarray:
    """Circulant eigenvalues of the periodic mass matrix alone."""
    _lam, mu = _circulant_pair(pencil)
    return mu


def _circulant_pair(pencil: Pencil1D):
    if pencil.bc != BoundaryKind.PERIODIC:
        raise ValueError("circulant eigenvalues require a periodic pencil")
    n = pencil.n
    K, M = pencil.K, pencil.M
    theta = 2.0 * np.pi * np.arange(n) / n
    e1 = np.exp(-1j * theta)             # e^{-i theta_l}
    en = np.exp(-1j * theta * (n - 1))   # e^{-i theta_l (n-1)}
    num = K.diag[0] + K.corner * e1 + K.off[0] * en
    den = M.diag[0] + M.corner * e1 + M.off[0] * en
    if np.abs(den).min() < 1e-14:
        raise ValueError("degenerate circulant mass eigenvalue")
    return num / den, den


@dataclass(frozen=True)
class EigenBasis:
    """Eigenvalues and normalized eigenvectors of a 1D pencil.

    ``kind`` is "numeric" (dense V stored, T-normalized so V^T M V = I) or
    "circulant" (closed form, no stored matrix; scales carry the mass
    normalization).
    """

    n: int
    kind: str
    lambdas: np.ndarray
    scales: np.ndarray
    vectors: np.ndarray | None = None

    def boundary_rows(self) -> np.ndarray:
        """Rows 1 and n of the (scaled) eigenvector matrix, shape (2, n)."""
        if self.kind == "numeric":
            return self.vectors[[0, -1], :]
        n = self.n
        k = np.arange(n)
        top = self.scales.astype(np.complex128)
        bot = np.exp(2j * np.pi * (n - 1) * k / n) * top
        return np.vstack([top, bot])

    def adjoint_boundary_rows(self) -> np.ndarray:
        """Pairing used on the right-hand side of the diagonalization."""
        R = self.boundary_rows()
        return np.conj(R) if self.kind == "circulant" else R

    @property
    def synthesis_scales(self) -> np.ndarray:
        """Per-mode scaling for the inverse (synthesis) transform."""
        if self.kind != "circulant":
            raise AttributeError("synthesis scales exist only for circulant bases")
        return self.n * self.scales


def circulant_eigenbasis(pencil: Pencil1D) -> EigenBasis:
    lam, mu = _circulant_pair(pencil)
    scales = 1.0 / np.sqrt(pencil.n * mu)
    return EigenBasis(n=pencil.n, kind="circulant", lambdas=lam, scales=scales)


_EIGEN_CACHE: dict = {}


def clear_eigen_cache() -> None:
    _EIGEN_CACHE.clear()


def solve_pencil_eigen(pencil: Pencil1D, cache: bool = True) -> EigenBasis:
    """Full eigendecomposition K V = M V Lambda of a Neumann or absorbing pencil.

    The generalized problem is reduced to a standard one through a Cholesky
    factor of the real SPD mass matrix, solved densely, and the eigenvectors
    are rescaled so that V^T M V = I (plain transpose; the pencil is complex
    symmetric, not Hermitian).  The dense O(n^3) cost is paid once per
    direction at plan time; results are memoized on (n, h, bc, omega).
    """
    if pencil.bc == BoundaryKind.PERIODIC:
        raise ValueError("periodic pencils use the circulant closed form")
    key = (pencil.n, pencil.h, pencil.bc, pencil.omega)
    if cache and key in _EIGEN_CACHE:
        return _EIGEN_CACHE[key]

    Md = pencil.M.dense().real
    Kd = pencil.K.dense()
    try:
        L = np.linalg.cholesky(Md)
        A1 = scipy.linalg.solve_triangular(L, Kd, lower=True)
        S = scipy.linalg.solve_triangular(L, A1.T, lower=True).T
        theta, Y = np.linalg.eig(S)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailure(str(exc)) from exc

    order = np.lexsort((theta.imag, theta.real))
    theta = theta[order]
    Y = Y[:, order]
    tnorm = np.einsum("il,il->l", Y, Y)
    bad = np.abs(tnorm) < NORMALIZATION_TOL
    if bad.any():
        l = int(np.argmax(bad))
        raise NormalizationFailure(
            f"eigenvector {l} has T-norm {abs(tnorm[l]):.2e} below {NORMALIZATION_TOL}")
    scales = 1.0 / np.sqrt(tnorm.astype(np.complex128))
    V = scipy.linalg.solve_triangular(L.T, Y, lower=False) * scales[None, :]
    V.flags.writeable = False

    basis = EigenBasis(n=pencil.n, kind="numeric", lambdas=theta.astype(np.complex128),
                       scales=scales, vectors=V)
    if cache:
        _EIGEN_CACHE[key] = basis
    return basis


@dataclass(frozen=True)
class LineTransformPlan:
    """Shape metadata for length-n transforms over `block` independent lines.

    Vectors are in lexicographic order: the transform direction is slowest, so
    line l of the transform touches the strided entries x[l*block + j].
    """

    n: int
    block: int

    @property
    def size(self) -> int:
        return self.n * self.block


def _lines(plan: LineTransformPlan, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.size != plan.size:
        raise ValueError(f"expected {plan.size} entries, got {x.size}")
    return x.reshape(plan.n, plan.block)


def forward_line_transform(plan: LineTransformPlan, x: np.ndarray,
                           scales: np.ndarray | None = None,
                           workers: int | None = None) -> np.ndarray:
    """Unnormalized forward DFT along every line; mode l scaled by scales[l]."""
    X = scipy.fft.fft(_lines(plan, x), axis=0, workers=workers)
    if scales is not None:
        X *= np.asarray(scales)[:, None]
    return X.reshape(x.shape)

def inverse_line_transform(plan: LineTransformPlan, x: np.ndarray,
                           scales: np.ndarray | None = None,
                           workers: int | None = None) -> np.ndarray:
    """Conjugate DFT with the 1/n factor; optional pre-scaling by scales."""
    X = _lines(plan, x)
    if scales is not None:
        X = X * np.asarray(scales)[:, None]
    out = scipy.fft.ifft(X, axis=0, workers=workers)
    return out.reshape(x.shape)


def boundary_restricted_product(basis: EigenBasis, x: np.ndarray,
                                direction: str = "forward") -> np.ndarray:
    """Restricted eigenvector products for the two boundary planes.

    forward: spectral vector (n*block,) -> boundary values (2*block,), using
    rows 1 and n of the eigenvector matrix.  adjoint: boundary data
    (2*block,) -> full spectral vector (n*block,), using the basis-appropriate
    pairing (transpose for numeric, conjugate transpose for circulant).
    """
    x = np.asarray(x, dtype=np.complex128)
    if direction == "forward":
        if x.size % basis.n:
            raise ValueError(f"length {x.size} is not a multiple of n={basis.n}")
        X = x.reshape(basis.n, -1)
        out = basis.boundary_rows() @ X
        return out.reshape(-1) if x.ndim == 1 else out
    if direction == "adjoint":
        if x.size % 2:
            raise ValueError(f"boundary data length {x.size} is odd")
        Y = x.reshape(2, -1)
        out = basis.adjoint_boundary_rows().T @ Y
        return out.reshape(-1) if x.ndim == 1 else out
    raise ValueError(f"direction must be 'forward' or 'adjoint', got {direction!r}")
