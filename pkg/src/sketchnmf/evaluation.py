"""Full-data metrics and trace checks.

These are the only functions that read the uncompressed matrix after
compression.
"""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ZeroData, ZeroFactors
from .linalg import as_matrix, frob_product_factored, qr_thin
from .objectives import obj_full


def _data_norm(X):
    norm = float(np.linalg.norm(X))
    if norm == 0:
        raise ZeroData("the data matrix is zero")
    return norm


def relative_error(X, F):
    """``||X - U V^T||_F / ||X||_F``."""
    X = as_matrix(X, "X")
    norm = _data_norm(X)
    return float(np.sqrt(obj_full(X, F))) / norm


def cosine_similarity(X, F):
    """``<X, U V^T> / (||X||_F ||U V^T||_F)`` using ``<X, U V^T> = Tr(V^T X^T U)``."""
    X = as_matrix(X, "X")
    norm = _data_norm(X)
    fit_sq = frob_product_factored(F.U.T @ F.U, F.V.T @ F.V)
    if fit_sq <= 0:
        raise ZeroFactors("U V^T is zero")
    inner = float(np.einsum("ij,ij->", X.T @ F.U, F.V))
    return inner / (norm * np.sqrt(fit_sq))


def residual_projection_norm(X, A, block=256):
    """Norm of the part of ``X`` outside the row space of the left operator ``A``.

    Computed as ``||X - A^T (A X)||_F`` in row blocks rather than through
    ``||X||^2 - ||A X||^2``, which cancels badly when the residual is tiny.
    Non-orthonormal operators are first orthonormalized.
    """
    X = as_matrix(X, "X")
    basis = A.matrix.T if A.orthonormal else qr_thin(A.matrix.T)
    coef = basis.T @ X
    total = 0.0
    for start in range(0, X.shape[0], block):
        R = basis[start:start + block] @ coef
        np.subtract(X[start:start + block], R, out=R)
        total += float(np.einsum("ij,ij->", R, R))
    return float(np.sqrt(total))


def check_monotone(trace, slack_rel=1e-12):
    """``(ok, index)``: whether ``obj[t+1] <= obj[t] (1 + slack_rel)`` for all ``t``.

    ``index`` is the first ``t`` that fails, or None. Accepts objective values
    or trace entries with an ``objective`` attribute.
    """
    values = [getattr(e, "objective", e) for e in trace]
    if not values:
        raise ValueError("empty trace")
    for t in range(len(values) - 1):
        if values[t + 1] > values[t] * (1.0 + slack_rel):
            return False, t
    return True, None


@dataclass
class MetricsReport:
    relative_error: float
    cosine_similarity: float
    objective_terms: dict = field(default_factory=dict)
    residual_projection: float = None
    rescaled_relative_error: float = None

    def to_json(self):
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def metrics_report(X, F, objective_terms=None, operator=None, ridge_lambda=None):
    """Score factors against the full data.

    ``ridge_lambda`` also scores ``(1 + lambda) U V^T``, the rescaling that
    undoes the ridge shrinkage.
    """
    report = MetricsReport(relative_error(X, F), cosine_similarity(X, F),
                           dict(objective_terms or {}))
    if operator is not None and operator.side == "left":
        report.residual_projection = residual_projection_norm(X, operator)
    if ridge_lambda is not None:
        scaled = type(F)(F.U * (1.0 + ridge_lambda), F.V)
        report.rescaled_relative_error = relative_error(X, scaled)
    return report
