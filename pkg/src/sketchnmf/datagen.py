"""Synthetic data and matrix file I/O."""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .errors import DimOverflow, InvalidDim, NegativeData, ParseError
from .linalg import as_matrix
from .objectives import FactorPair

DENSE_BUDGET = 2**27
FORMATS = ("csv_dense", "matrix_market")
MM_HEADER = "%%MatrixMarket matrix coordinate real general"


@dataclass(frozen=True)
class SyntheticSpec:
    m: int
    n: int
    r: int
    seed: int = 0
    distribution: str = "standard_lognormal"

    def __post_init__(self):
        if min(self.m, self.n, self.r) < 1:
            raise InvalidDim(f"dimensions must be positive: {self.m}, {self.n}, {self.r}")
        if self.r > min(self.m, self.n):
            raise InvalidDim(f"rank {self.r} exceeds min({self.m}, {self.n})")
        if self.distribution != "standard_lognormal":
            raise ValueError(f"unknown distribution {self.distribution!r}")


def synthetic_lognormal(spec):
    """``X = U V^T`` with ``U``, ``V`` entries ``exp(z)``, ``z`` standard normal.

    Returns ``(X, FactorPair(U, V))``.
    """
    U = np.exp(rng.standard_normal((spec.m, spec.r), spec.seed, rng.DATA_U))
    V = np.exp(rng.standard_normal((spec.n, spec.r), spec.seed, rng.DATA_V))
    return U @ V.T, FactorPair(U, V)


def add_relative_noise(X, level, seed):
    """``X + level ||X||_F / sqrt(mn) * G`` with Gaussian ``G``, clipped at zero."""
    X = as_matrix(X, "X")
    G = rng.standard_normal(X.shape, seed, rng.NOISE)
    G *= level * np.linalg.norm(X) / np.sqrt(X.size)
    G += X
    return np.maximum(G, 0.0, out=G)


def _check_budget(m, n, budget):
    if m * n > budget:
        raise DimOverflow(f"{m} x {n} exceeds the dense budget of {budget} entries")


def _check_nonnegative(X):
    if (X < 0).any():
        raise NegativeData(np.unravel_index(int(np.argmax(X < 0)), X.shape))


def _load_csv(path, budget):
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(lineno, f"expected {width} fields, got {len(row)}")
            rows.append(row)
            _check_budget(len(rows), width, budget)
    if not rows:
        raise ParseError(0, "empty file")
    return np.array(rows, dtype=np.float64)


def _load_matrix_market(path, budget):
    with open(path) as fh:
        lines = enumerate(fh, 1)
        lineno, header = next(lines, (1, ""))
        if header.strip().lower() != MM_HEADER.lower():
            raise ParseError(lineno, "expected a 'coordinate real general' MatrixMarket header")
        size = None
        for lineno, line in lines:
            line = line.strip()
            if not line or line.startswith("%"):
                continue
            toks = line.split()
            if size is None:
                if len(toks) != 3:
                    raise ParseError(lineno, "size line needs 'rows cols entries'")
                try:
                    m, n, nnz = (int(t) for t in toks)
                except ValueError:
                    raise ParseError(lineno, "size line must hold integers") from None
                if min(m, n) < 1 or nnz < 0:
                    raise ParseError(lineno, f"bad size {m} x {n} with {nnz} entries")
                _check_budget(m, n, budget)
                X = np.zeros((m, n))
                size = (m, n, nnz)
                seen = 0
                continue
            if len(toks) != 3:
                raise ParseError(lineno, "entry line needs 'row col value'")
            try:
                i, j, v = int(toks[0]), int(toks[1]), float(toks[2])
            except ValueError:
                raise ParseError(lineno, "malformed entry") from None
            if not (1 <= i <= size[0] and 1 <= j <= size[1]):
                raise ParseError(lineno, f"index ({i}, {j}) outside {size[0]} x {size[1]}")
            X[i - 1, j - 1] = v
            seen += 1
    if size is None:
        raise ParseError(lineno, "missing size line")
    if seen != size[2]:
        raise ParseError(lineno, f"expected {size[2]} entries, found {seen}")
    return X


def load_matrix(path, format="csv_dense", budget=DENSE_BUDGET):
    """Read a nonnegative dense matrix from ``csv_dense`` or MatrixMarket coordinate files."""
    if format == "csv_dense":
        X = _load_csv(path, budget)
    elif format == "matrix_market":
        X = _load_matrix_market(path, budget)
    else:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    if not np.isfinite(X).all():
        raise ParseError(0, "non-finite entries")
    _check_nonnegative(X)
    return X


def save_matrix(path, X, format="csv_dense"):
    X = as_matrix(X, "X")
    path = Path(path)
    if format == "csv_dense":
        np.savetxt(path, X, delimiter=",", fmt="%.17g")
    elif format == "matrix_market":
        i, j = np.nonzero(X)
        with open(path, "w") as fh:
            fh.write(MM_HEADER + "\n")
            fh.write(f"{X.shape[0]} {X.shape[1]} {len(i)}\n")
            for a, b in zip(i, j):
                fh.write(f"{a + 1} {b + 1} {X[a, b]:.17g}\n")
    else:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
