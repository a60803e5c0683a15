"""Small dense linear algebra kernel used by the rest of the package.

Matrices are plain float64 numpy arrays. ``as_matrix`` is the single entry
point that validates shape and finiteness.
"""
import numpy as np

from .errors import RankDeficient

RANK_TOL = 1e-12


def as_matrix(M, name="matrix"):
    """Return ``M`` as a finite, C-contiguous 2-D float64 array."""
    M = np.ascontiguousarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {M.shape}")
    if not np.isfinite(M).all():
        raise ValueError(f"{name} contains NaN or Inf")
    return M


def as_vector(v, name="vector"):
    v = np.ascontiguousarray(v, dtype=np.float64).reshape(-1)
    if v.size < 1:
        raise ValueError(f"{name} must be non-empty")
    if not np.isfinite(v).all():
        raise ValueError(f"{name} contains NaN or Inf")
    return v


def qr_thin(M):
    """Thin Householder QR, returning only the orthonormal factor.

    The columns are signed so that the implied triangular factor has a
    nonnegative diagonal. Raises ``RankDeficient(j)`` when column ``j`` has a
    residual norm below ``1e-12 * ||M||_F`` after orthogonalization against
    the previous columns.
    """
    M = as_matrix(M)
    m, p = M.shape
    if p > m:
        raise ValueError(f"qr_thin needs rows >= cols, got {M.shape}")
    Q, R = np.linalg.qr(M, mode="reduced")
    diag = np.diag(R)
    tol = RANK_TOL * np.linalg.norm(M)
    bad = np.flatnonzero(np.abs(diag) <= tol)
    if bad.size:
        raise RankDeficient(int(bad[0]))
    Q *= np.where(diag < 0, -1.0, 1.0)
    return Q


def qr_thin_truncated(M):
    """Like ``qr_thin`` but drops dependent columns instead of raising.

    Columns are taken left to right and skipped when dependent on the ones
    already kept; at most ``rows`` survive. Returns ``(Q, kept)`` where
    ``kept`` lists the surviving column indices.
    """
    M = as_matrix(M)
    m, p = M.shape
    kept = list(range(p)) if p <= m else []
    if p > m:
        for j in range(p):
            try:
                qr_thin(M[:, kept + [j]])
            except RankDeficient:
                continue
            kept.append(j)
            if len(kept) == m:
                break
    while kept:
        try:
            return qr_thin(M[:, kept]), kept
        except RankDeficient as err:
            del kept[err.column]
    raise RankDeficient(0)


def singular_values(M):
    """Singular values of ``M`` in descending order."""
    return np.linalg.svd(as_matrix(M), compute_uv=False)


def gram(M):
    """``M^T M``, symmetrized."""
    G = M.T @ M
    G += G.T
    G *= 0.5
    return G


def frob_product_factored(Gu, Gv):
    """``Tr(Gu Gv)``, i.e. ``||U V^T||_F^2`` when ``Gu = U^T U`` and ``Gv = V^T V``."""
    return float(np.einsum("ij,ji->", Gu, Gv))
