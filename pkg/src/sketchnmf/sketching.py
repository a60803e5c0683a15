"""Sketch operators, nonnegativity shifts and compressed data records.

A left operator ``A`` is ``k x m`` and compresses ``X`` to ``A X``; a right
operator is ``n x k`` and compresses to ``X A``. The compressed records are
the only view of the data the solvers ever get.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .errors import DimMismatch, InvalidDim, NegativeData
from .linalg import as_matrix, qr_thin, qr_thin_truncated, singular_values

KINDS = ("gaussian_iid", "orthonormal_rows", "rangefinder")
SIDES = ("left", "right")
ORTHO_TOL = 1e-10
BLOCK_ROWS = 256


@dataclass(frozen=True)
class SketchOperator:
    matrix: np.ndarray
    kind: str
    side: str
    seed: int
    requested_k: int = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sketch kind {self.kind!r}")
        if self.side not in SIDES:
            raise ValueError(f"unknown sketch side {self.side!r}")
        object.__setattr__(self, "matrix", as_matrix(self.matrix, "sketch"))
        if self.requested_k is None:
            object.__setattr__(self, "requested_k", self.k)

    @property
    def k(self):
        return self.matrix.shape[0] if self.side == "left" else self.matrix.shape[1]

    @property
    def dim(self):
        """Size of the data dimension the operator contracts."""
        return self.matrix.shape[1] if self.side == "left" else self.matrix.shape[0]

    @property
    def near(self):
        """The operator as a ``dim x k`` matrix ``P`` whose Gram ``P P^T`` enters MU."""
        return self.matrix.T if self.side == "left" else self.matrix

    @property
    def orthonormal(self):
        return self.kind in ("orthonormal_rows", "rangefinder")

    def orthonormality_defect(self):
        """``max |P^T P - I|`` (``A A^T - I`` for a left operator)."""
        P = self.near
        return float(np.abs(P.T @ P - np.eye(P.shape[1])).max())


@dataclass(frozen=True)
class CompressedOneSided:
    A: SketchOperator
    Y: np.ndarray
    row_sums: np.ndarray
    x_frob: float

    @property
    def m(self):
        return self.A.dim

    @property
    def n(self):
        return self.Y.shape[1]

    @property
    def k(self):
        return self.A.k


@dataclass(frozen=True)
class CompressedTwoSided:
    A1: SketchOperator
    A2: SketchOperator
    Y1: np.ndarray
    Y2: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    x_frob: float
    notes: tuple = field(default=())

    @property
    def m(self):
        return self.A1.dim

    @property
    def n(self):
        return self.A2.dim

    @property
    def k(self):
        return self.A1.k


def _check_dims(k, m):
    if k < 1 or m < 1:
        raise InvalidDim(f"sketch dimensions must be positive, got k={k}, dim={m}")


def _stream(side, left, right):
    if side not in SIDES:
        raise ValueError(f"unknown sketch side {side!r}")
    return left if side == "left" else right


def sample_gaussian_sketch(k, m, seed, variance=None, side="left"):
    """I.i.d. N(0, variance) sketch; ``m`` is the data dimension it contracts.

    The default variance ``1/m`` makes the operator approximately orthogonal
    for ``k`` well below ``m``.
    """
    _check_dims(k, m)
    if variance is None:
        variance = 1.0 / m
    if variance <= 0:
        raise ValueError("variance must be positive")
    stream = _stream(side, rng.SKETCH_LEFT, rng.SKETCH_RIGHT)
    P = np.sqrt(variance) * rng.standard_normal((m, k), seed, stream)
    matrix = P.T if side == "left" else P
    return SketchOperator(matrix, "gaussian_iid", side, int(seed))


def sample_orthonormal_sketch(k, m, seed, side="left"):
    """Sketch with orthonormal rows (left) or columns (right)."""
    _check_dims(k, m)
    if k > m:
        raise InvalidDim(f"orthonormal sketch needs k <= {m}, got k={k}")
    stream = _stream(side, rng.SKETCH_LEFT, rng.SKETCH_RIGHT)
    Q = qr_thin(rng.standard_normal((m, k), seed, stream))
    matrix = Q.T if side == "left" else Q
    return SketchOperator(matrix, "orthonormal_rows", side, int(seed))


def rangefinder_sketch(X, k, seed, side="left"):
    """Data-adapted sketch from a randomized rangefinder pass.

    For ``side="left"``: draw a standard Gaussian ``n x k`` matrix ``S``, take
    ``Q`` an orthonormal basis of ``X S`` and return ``A = Q^T``. The right
    version works on ``X^T``. Columns of ``X S`` that are numerically
    dependent are dropped, so ``op.k`` may be smaller than ``op.requested_k``.
    """
    X = as_matrix(X, "X")
    m, n = X.shape
    if not 1 <= k <= min(m, n):
        raise InvalidDim(f"rangefinder needs 1 <= k <= {min(m, n)}, got k={k}")
    stream = _stream(side, rng.RANGEFINDER_LEFT, rng.RANGEFINDER_RIGHT)
    if side == "left":
        S = rng.standard_normal((n, k), seed, stream)
        Q, _ = qr_thin_truncated(X @ S)
        matrix = Q.T
    else:
        S = rng.standard_normal((m, k), seed, stream)
        Q, _ = qr_thin_truncated(X.T @ S)
        matrix = Q
    return SketchOperator(matrix, "rangefinder", side, int(seed), requested_k=int(k))


def _negative_part_max(P, lam=0.0, Q=None, block=None):
    """``max((P P^T + lam (I - Q Q^T))_-)`` computed in row blocks.

    The default block height is the sketch width, so no block is larger than
    the operator itself.
    """
    p = P.shape[0]
    if block is None:
        block = max(1, P.shape[1], Q.shape[1] if Q is not None else 0)
    worst = 0.0
    for start in range(0, p, block):
        stop = min(start + block, p)
        G = P[start:stop] @ P.T
        if lam:
            if Q is not None:
                G -= lam * (Q[start:stop] @ Q.T)
            G[np.arange(stop - start), np.arange(start, stop)] += lam
        worst = max(worst, -float(G.min()))
    return worst


def shift_sigma(A, rule="gram"):
    """Smallest sigma making ``A^T A + sigma 11^T`` (left) or ``A A^T + sigma 11^T``
    (right) entrywise nonnegative.

    ``rule="sketch_gram"`` instead uses the small ``k x k`` Gram (``A A^T`` for a
    left operator). That variant does not certify monotone MU.
    """
    if rule == "gram":
        return _negative_part_max(A.near)
    if rule == "sketch_gram":
        P = A.near
        return max(0.0, -float((P.T @ P).min()))
    raise ValueError(f"unknown sigma rule {rule!r}")


def shift_sigma_regularized(A, lam, Q):
    """Shift certifying both the target and the regularized Gram sums.

    Returns the max of ``max((G)_-)`` and ``max((G + lam (I - Q Q^T))_-)``,
    where ``G`` is the operator's data-side Gram.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    Q = as_matrix(Q, "Q")
    P = A.near
    if Q.shape[0] != P.shape[0]:
        raise DimMismatch(f"Q has {Q.shape[0]} rows, the Gram is {P.shape[0]} x {P.shape[0]}")
    base = _negative_part_max(P)
    if lam == 0:
        return base
    return max(base, _negative_part_max(P, lam, Q))


def approx_orthogonality_epsilon(A):
    """``max_i |s_i(A) - 1|`` over the singular values of the operator."""
    matrix = A.matrix if isinstance(A, SketchOperator) else as_matrix(A)
    return float(np.abs(singular_values(matrix) - 1.0).max())


def _check_nonnegative(X):
    if (X < 0).any():
        raise NegativeData(np.unravel_index(int(np.argmax(X < 0)), X.shape))


def compress_one_sided(X, A):
    """Single pass over ``X`` producing ``Y = A X``, ``1^T X`` and ``||X||_F``."""
    X = as_matrix(X, "X")
    _check_nonnegative(X)
    if A.side != "left":
        raise DimMismatch("one-sided compression needs a left operator")
    m, n = X.shape
    if A.dim != m:
        raise DimMismatch(f"operator contracts {A.dim} rows but X has {m}")
    Y = np.zeros((A.k, n))
    row_sums = np.zeros(n)
    sq = 0.0
    for start in range(0, m, BLOCK_ROWS):
        Xb = X[start:start + BLOCK_ROWS]
        Y += A.matrix[:, start:start + BLOCK_ROWS] @ Xb
        row_sums += Xb.sum(axis=0)
        sq += float(np.einsum("ij,ij->", Xb, Xb))
    return CompressedOneSided(A, Y, row_sums, float(np.sqrt(sq)))


def compress_two_sided(X, A1, A2):
    """Left and right sketches, both sum vectors, and orthonormal range bases.

    ``Q1`` spans the columns of ``X A2`` (``m x k``); ``Q2`` spans the rows of
    ``A1 X`` (``n x k``).
    """
    X = as_matrix(X, "X")
    _check_nonnegative(X)
    m, n = X.shape
    if A1.side != "left" or A2.side != "right":
        raise DimMismatch("two-sided compression needs a left and a right operator")
    if A1.dim != m or A2.dim != n:
        raise DimMismatch(f"operators contract ({A1.dim}, {A2.dim}) but X is {X.shape}")
    Y1 = np.zeros((A1.k, n))
    Y2 = np.empty((m, A2.k))
    row_sums = np.zeros(n)
    col_sums = np.empty(m)
    sq = 0.0
    for start in range(0, m, BLOCK_ROWS):
        stop = min(start + BLOCK_ROWS, m)
        Xb = X[start:stop]
        Y1 += A1.matrix[:, start:stop] @ Xb
        Y2[start:stop] = Xb @ A2.matrix
        row_sums += Xb.sum(axis=0)
        col_sums[start:stop] = Xb.sum(axis=1)
        sq += float(np.einsum("ij,ij->", Xb, Xb))
    Q1, kept1 = qr_thin_truncated(Y2)
    Q2, kept2 = qr_thin_truncated(Y1.T)
    notes = []
    if len(kept1) < Y2.shape[1]:
        notes.append(f"Q1 truncated to {len(kept1)} of {Y2.shape[1]} columns")
    if len(kept2) < Y1.shape[0]:
        notes.append(f"Q2 truncated to {len(kept2)} of {Y1.shape[0]} columns")
    return CompressedTwoSided(A1, A2, Y1, Y2, row_sums, col_sums, Q1, Q2,
                              float(np.sqrt(sq)), tuple(notes))


def storage_elements(record):
    """Element counts of what a solver has to keep, against the dense ``m n``."""
    m, n = record.m, record.n
    if isinstance(record, CompressedOneSided):
        sketch = record.A.matrix.size + record.Y.size
        sums = record.row_sums.size
    else:
        sketch = (record.A1.matrix.size + record.A2.matrix.size
                  + record.Y1.size + record.Y2.size)
        sums = record.row_sums.size + record.col_sums.size
    return {
        "sketch": int(sketch),
        "sums": int(sums),
        "dense": int(m * n),
        "memory_ratio": sketch / (m * n),
    }


# -- serialization -----------------------------------------------------------

def write_csv(path, M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    np.savetxt(path, M, delimiter=",", fmt="%.17g")


def read_csv(path, vector=False):
    M = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    return M.reshape(-1) if vector else M


def _op_meta(op):
    return {"kind": op.kind, "side": op.side, "seed": op.seed,
            "k": op.k, "requested_k": op.requested_k}


def save_compressed(record, directory, sigma=None, extra=None):
    """Write a record as CSV files plus ``manifest.json``; returns the manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if isinstance(record, CompressedOneSided):
        write_csv(d / "A.csv", record.A.matrix)
        write_csv(d / "Y.csv", record.Y)
        write_csv(d / "row_sums.csv", record.row_sums)
        manifest = {"record": "one_sided", **_op_meta(record.A)}
    else:
        for name in ("Y1", "Y2", "Q1", "Q2"):
            write_csv(d / f"{name}.csv", getattr(record, name))
        write_csv(d / "A1.csv", record.A1.matrix)
        write_csv(d / "A2.csv", record.A2.matrix)
        write_csv(d / "row_sums.csv", record.row_sums)
        write_csv(d / "col_sums.csv", record.col_sums)
        manifest = {
            "record": "two_sided",
            "kind": record.A1.kind,
            "side": "both",
            "seed": record.A1.seed,
            "k": record.k,
            "operators": [_op_meta(record.A1), _op_meta(record.A2)],
            "notes": list(record.notes),
        }
    manifest.update({"m": record.m, "n": record.n, "x_frob": record.x_frob,
                     "sigma": sigma, "elements": storage_elements(record)})
    if extra:
        manifest.update(extra)
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def load_compressed(directory):
    """Inverse of ``save_compressed``; returns ``(record, manifest)``."""
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    if manifest["record"] == "one_sided":
        A = SketchOperator(read_csv(d / "A.csv"), manifest["kind"], manifest["side"],
                           manifest["seed"], manifest.get("requested_k"))
        record = CompressedOneSided(A, read_csv(d / "Y.csv"),
                                    read_csv(d / "row_sums.csv", vector=True),
                                    manifest["x_frob"])
    elif manifest["record"] == "two_sided":
        m1, m2 = manifest["operators"]
        A1 = SketchOperator(read_csv(d / "A1.csv"), m1["kind"], m1["side"], m1["seed"],
                            m1.get("requested_k"))
        A2 = SketchOperator(read_csv(d / "A2.csv"), m2["kind"], m2["side"], m2["seed"],
                            m2.get("requested_k"))
        record = CompressedTwoSided(
            A1, A2, read_csv(d / "Y1.csv"), read_csv(d / "Y2.csv"),
            read_csv(d / "row_sums.csv", vector=True),
            read_csv(d / "col_sums.csv", vector=True),
            read_csv(d / "Q1.csv"), read_csv(d / "Q2.csv"),
            manifest["x_frob"], tuple(manifest.get("notes", ())))
    else:
        raise ValueError(f"unknown record type {manifest['record']!r}")
    return record, manifest
