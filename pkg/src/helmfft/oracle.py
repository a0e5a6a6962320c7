"""Brute-force dense reference: explicit Kronecker assembly plus LAPACK solves.

Everything here is deliberately independent of the fast path (transforms,
block factorizations): matrices are expanded entrywise from the separable
definitions and solved with dense partially-pivoted LU.  Used to generate and
check expected values throughout the test suite.  Hard size caps keep
accidental O(N^3) blowups out of CI.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .assembly import build_operator_A, build_operator_B
from .core import BoundaryKind, Grid

DENSE_SIZE_CAP = 20_000
EIG_SIZE_CAP = 512


class SizeLimit(RuntimeError):
    """Problem too large for the dense reference path."""


@dataclass(frozen=True)
class DenseProblem:
    grid: Grid
    omega: float
    bc_x1: BoundaryKind
    A: np.ndarray
    B: np.ndarray


class DenseSolveResult(NamedTuple):
    u: np.ndarray
    residual: float


def dense_problem(grid: Grid, omega: float,
                  bc_x1: BoundaryKind = BoundaryKind.ABSORBING) -> DenseProblem:
    """Assemble dense A and B by explicit Kronecker expansion (N <= 20000)."""
    if grid.npoints > DENSE_SIZE_CAP:
        raise SizeLimit(f"N = {grid.npoints} exceeds dense cap {DENSE_SIZE_CAP}")
    A = build_operator_A(grid, omega, bc_x1).dense()
    B = build_operator_B(grid, omega).dense()
    return DenseProblem(grid=grid, omega=float(omega), bc_x1=bc_x1, A=A, B=B)


def dense_solve(problem: DenseProblem, which: str, f: np.ndarray) -> DenseSolveResult:
    """LU solve with partial pivoting against A or B; reports the residual."""
    M = {"A": problem.A, "B": problem.B}[which.upper()]
    f = np.asarray(f, dtype=np.complex128).reshape(-1)
    if f.shape[0] != M.shape[0]:
        raise ValueError(f"rhs length {f.shape[0]} does not match N = {M.shape[0]}")
    lu, piv = scipy.linalg.lu_factor(M)
    if np.abs(np.diag(lu)).min() < 1e-14 * np.abs(M).max():
        raise np.linalg.LinAlgError("matrix is numerically singular")
    u = scipy.linalg.lu_solve((lu, piv), f)
    fnorm = np.linalg.norm(f)
    res = np.linalg.norm(M @ u - f) / fnorm if fnorm > 0 else 0.0
    return DenseSolveResult(u=u, residual=float(res))


def dense_partial_solution(problem: DenseProblem, which: str, f: np.ndarray) -> np.ndarray:
    """Full dense solve restricted to the two x_1 boundary planes (length 2 N/n_1)."""
    u = dense_solve(problem, which, f).u
    n1 = problem.grid.n[0]
    block = problem.grid.npoints // n1
    U = u.reshape(n1, block)
    return np.concatenate([U[0], U[-1]])


def dense_eigensolve_pencil(K: np.ndarray, M: np.ndarray):
    """Generalized eigenpairs of (K, M) by the generic dense method (n <= 512).

    Reference for the closed forms and the normalized pencil solver; no
    normalization convention is imposed here.
    """
    K = np.asarray(K, dtype=np.complex128)
    M = np.asarray(M, dtype=np.complex128)
    n = K.shape[0]
    if n > EIG_SIZE_CAP:
        raise SizeLimit(f"n = {n} exceeds eigensolve cap {EIG_SIZE_CAP}")
    lam, V = scipy.linalg.eig(K, M)
    if not np.all(np.isfinite(lam)):
        raise np.linalg.LinAlgError("generalized eigensolve did not converge")
    order = np.lexsort((lam.imag, lam.real))
    return lam[order], V[:, order]
