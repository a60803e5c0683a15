"""Compressed objectives evaluated from compressed records only.

Every value is the plain squared-Frobenius objective (no 1/2 prefactor).
Products are ordered so that no intermediate is larger than
``max(m, n) x max(r, k)``; the ``*_terms`` functions return each summand by
name and the unsuffixed functions return their sum.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch
from .linalg import as_matrix, frob_product_factored


@dataclass(frozen=True)
class FactorPair:
    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U = as_matrix(self.U, "U")
        V = as_matrix(self.V, "V")
        if U.shape[1] != V.shape[1]:
            raise DimMismatch(f"U has rank {U.shape[1]} but V has rank {V.shape[1]}")
        if (U < 0).any() or (V < 0).any():
            raise ValueError("factors must be entrywise nonnegative")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    @property
    def rank(self):
        return self.U.shape[1]

    def copy(self):
        return FactorPair(self.U.copy(), self.V.copy())


def _sq(M):
    return float(np.einsum("ij,ij->", M, M)) if M.ndim == 2 else float(M @ M)


def _check(F, m, n):
    if F.U.shape[0] != m or F.V.shape[0] != n:
        raise DimMismatch(f"factors are {F.U.shape}, {F.V.shape}; data is {m} x {n}")


def sketch_residual(Y, AU, V):
    """``||Y - (A U) V^T||_F^2`` for a left sketch."""
    R = AU @ V.T
    np.subtract(Y, R, out=R)
    return _sq(R)


def shift_residual(sums, U, V):
    """``||1^T X - (1^T U) V^T||^2`` given ``sums = 1^T X``."""
    R = V @ U.sum(axis=0)
    np.subtract(sums, R, out=R)
    return _sq(R)


def complement_energy(U, V, Q):
    """``||(I - Q Q^T) U V^T||_F^2`` for orthonormal ``Q``."""
    W = Q @ (Q.T @ U)
    np.subtract(U, W, out=W)
    return frob_product_factored(W.T @ W, V.T @ V)


def one_sided_orthogonal_terms(C, F, lam, sigma):
    _check(F, C.m, C.n)
    A = C.A.matrix
    U, V = F.U, F.V
    terms = {"sketch": sketch_residual(C.Y, A @ U, V)}
    # (I - A^T A) U V^T; equals the Gram-difference form when A A^T = I
    terms["projection"] = lam * complement_energy(U, V, A.T) if lam else 0.0
    terms["shift"] = sigma * shift_residual(C.row_sums, U, V) if sigma else 0.0
    return terms


def obj_one_sided_orthogonal(C, F, lam, sigma):
    """``||A X - A U V^T||^2 + lam ||P_A^perp U V^T||^2 + sigma ||1^T (X - U V^T)||^2``."""
    return sum(one_sided_orthogonal_terms(C, F, lam, sigma).values())


def one_sided_ridge_terms(C, F, lam, sigma):
    _check(F, C.m, C.n)
    U, V = F.U, F.V
    terms = {"sketch": sketch_residual(C.Y, C.A.matrix @ U, V)}
    terms["ridge"] = lam * frob_product_factored(U.T @ U, V.T @ V) if lam else 0.0
    terms["shift"] = sigma * shift_residual(C.row_sums, U, V) if sigma else 0.0
    return terms


def obj_one_sided_ridge(C, F, lam, sigma):
    """``||A X - A U V^T||^2 + lam ||U V^T||^2 + sigma ||1^T (X - U V^T)||^2``."""
    return sum(one_sided_ridge_terms(C, F, lam, sigma).values())


def two_sided_terms(C, F, lam1=0.0, lam2=0.0, sigma1=0.0, sigma2=0.0):
    _check(F, C.m, C.n)
    U, V = F.U, F.V
    terms = {
        "sketch_left": sketch_residual(C.Y1, C.A1.matrix @ U, V),
        # (X - U V^T) A2 = Y2 - U (V^T A2), and transposing keeps the helper
        "sketch_right": sketch_residual(C.Y2.T, C.A2.matrix.T @ V, U),
    }
    terms["projection_left"] = lam1 * complement_energy(U, V, C.Q1) if lam1 else 0.0
    terms["projection_right"] = lam2 * complement_energy(V, U, C.Q2) if lam2 else 0.0
    terms["shift_left"] = sigma1 * shift_residual(C.row_sums, U, V) if sigma1 else 0.0
    terms["shift_right"] = sigma2 * shift_residual(C.col_sums, V, U) if sigma2 else 0.0
    return terms


def obj_two_sided(C, F, lam1=0.0, lam2=0.0, sigma1=0.0, sigma2=0.0):
    """Two-sided sketched objective with projector regularizers and both shifts."""
    return sum(two_sided_terms(C, F, lam1, lam2, sigma1, sigma2).values())


def obj_full(X, F, block=256):
    """Exact ``||X - U V^T||_F^2``; needs the full data, evaluation only."""
    X = as_matrix(X, "X")
    _check(F, *X.shape)
    total = 0.0
    for start in range(0, X.shape[0], block):
        R = F.U[start:start + block] @ F.V.T
        np.subtract(X[start:start + block], R, out=R)
        total += _sq(R)
    return total
