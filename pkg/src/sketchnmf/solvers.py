"""Sketched multiplicative updates, projected gradient descent and the driver.

A compressed objective is a list of Gram terms. Each term lives on one side
(``left`` acts on the ``m`` rows of ``U``, ``right`` on the ``n`` rows of
``V``) and knows how to apply its Gram matrix and its target to a factor in
factored form. Generic objective::

    1/2 sum_left ||A_i (X_i - U V^T)||^2 + 1/2 sum_right ||(X_j - U V^T) B_j||^2

The MU step for ``U`` is ``U * N / D`` with

    N = sum_left A_i^T A_i X_i V + sum_right X_j B_j B_j^T V
    D = (sum_left A_i^T A_i) U V^T V + U V^T (sum_right B_j B_j^T) V

and the ``V`` step is the same with the roles of the sides swapped. ``D - N``
is the gradient of the 1/2-scaled objective, which PGD reuses. Both are
assembled in row blocks from small ``k x r`` / ``r x r`` caches so nothing
of size ``m x m``, ``n x n`` or ``m x n`` is ever formed.
"""
import time
from dataclasses import dataclass, field
from collections import namedtuple

import numpy as np

from . import rng
from .errors import DimMismatch, InsufficientSigma, LambdaOutOfRange, NonFiniteUpdate
from .linalg import as_matrix
from .objectives import (
    FactorPair,
    complement_energy,
    one_sided_orthogonal_terms,
    one_sided_ridge_terms,
    sketch_residual,
    two_sided_terms,
)
from .sketching import ORTHO_TOL, shift_sigma, shift_sigma_regularized

BLOCK_ROWS = 256
SIGMA_SLACK = 1e-12
DIVERGENCE_FACTOR = 1e6

_Pair = namedtuple("_Pair", "U V")


def _other(side):
    return "right" if side == "left" else "left"


# -- Gram terms ---------------------------------------------------------------

class SketchTerm:
    """Explicit sketch: Gram ``w P P^T`` on this side, target ``P Z^T``.

    ``P`` is the operator as a ``dim x k`` matrix (``A^T`` for a left sketch,
    ``B`` for a right one) and ``Z = X_side^T P`` is the sketched data seen from
    the other side (``Y^T`` for a left sketch, ``Y`` for a right one). The Gram
    weight ``w`` scales only the quadratic part.
    """

    name = "sketch"

    def __init__(self, side, P, Z, weight=1.0):
        self.side = side
        self.P = np.asarray(P, dtype=np.float64)
        self.Z = np.asarray(Z, dtype=np.float64)
        if self.P.shape[1] != self.Z.shape[1]:
            raise DimMismatch(f"sketch widths differ: {self.P.shape} vs {self.Z.shape}")
        self.weight = float(weight)
        self._P_colsum = self.P.sum(axis=0)

    @property
    def dims(self):
        return self.P.shape[0], self.Z.shape[0]

    # quadratic part
    def gram_cache(self, H):
        return self.P.T @ H

    def gram_rows(self, H, cache, start, stop):
        rows = self.P[start:stop] @ cache
        if self.weight != 1.0:
            rows *= self.weight
        return rows

    def gram_colsum(self, H, cache):
        return self.weight * (self._P_colsum @ cache)

    def quad(self, G):
        c = self.P.T @ G
        return self.weight * (c.T @ c)

    # linear part
    def target_near_cache(self, G):
        return self.Z.T @ G

    def target_near_rows(self, cache, start, stop):
        return self.P[start:stop] @ cache

    def target_far_cache(self, H):
        return self.P.T @ H

    def target_far_rows(self, cache, start, stop):
        return self.Z[start:stop] @ cache

    def value(self, H, G):
        """Objective contribution given the factor on this side ``H`` and the other ``G``."""
        PH = self.P.T @ H
        val = sketch_residual(self.Z.T, PH, G)
        if self.weight != 1.0:
            val += (self.weight - 1.0) * float(np.einsum("ij,ji->", PH.T @ PH, G.T @ G))
        return val

    def dense_gram(self):
        return self.weight * (self.P @ self.P.T)

    def dense_target(self):
        return self.P @ self.Z.T


class ShiftTerm(SketchTerm):
    """Rank-one shift ``sigma ||1^T (X - U V^T)||^2`` (left) or its column analogue."""

    name = "shift"

    def __init__(self, side, sigma, sums, dim):
        root = np.sqrt(float(sigma))
        super().__init__(side, np.full((dim, 1), root), root * np.reshape(sums, (-1, 1)))
        self.sigma = float(sigma)


class ProjectorComplementTerm:
    """``lam ||(I - Q Q^T) U V^T||^2`` (left) or ``lam ||U V^T (I - Q Q^T)||^2`` (right)."""

    name = "projection"

    def __init__(self, side, lam, Q):
        self.side = side
        self.lam = float(lam)
        self.Q = as_matrix(Q, "Q")
        self._Q_colsum = self.Q.sum(axis=0)

    @property
    def dims(self):
        return self.Q.shape[0], None

    def gram_cache(self, H):
        return self.Q.T @ H

    def gram_rows(self, H, cache, start, stop):
        rows = self.Q[start:stop] @ cache
        np.subtract(H[start:stop], rows, out=rows)
        rows *= self.lam
        return rows

    def gram_colsum(self, H, cache):
        return self.lam * (H.sum(axis=0) - self._Q_colsum @ cache)

    def quad(self, G):
        c = self.Q.T @ G
        return self.lam * (G.T @ G - c.T @ c)

    target_near_cache = None

    def value(self, H, G):
        return self.lam * complement_energy(H, G, self.Q)

    def dense_gram(self):
        p = self.Q.shape[0]
        return self.lam * (np.eye(p) - self.Q @ self.Q.T)

    def dense_target(self):
        return None


class ScaledIdentityTerm:
    """``lam ||U V^T||^2``, attached to one side."""

    name = "identity"

    def __init__(self, side, lam, dim):
        self.side = side
        self.lam = float(lam)
        self.dim = int(dim)

    @property
    def dims(self):
        return self.dim, None

    def gram_cache(self, H):
        return None

    def gram_rows(self, H, cache, start, stop):
        return self.lam * H[start:stop]

    def gram_colsum(self, H, cache):
        return self.lam * H.sum(axis=0)

    def quad(self, G):
        return self.lam * (G.T @ G)

    target_near_cache = None

    def value(self, H, G):
        return self.lam * float(np.einsum("ij,ji->", H.T @ H, G.T @ G))

    def dense_gram(self):
        return self.lam * np.eye(self.dim)

    def dense_target(self):
        return None


def _has_target(term):
    return term.target_near_cache is not None


# -- problems -----------------------------------------------------------------

@dataclass(frozen=True)
class Validity:
    sum_gram_nonneg_certified: bool
    sum_target_nonneg_certified: bool


@dataclass(frozen=True)
class SketchedMUProblem:
    m: int
    n: int
    r: int
    terms: tuple
    validity: Validity
    name: str = "generic"
    params: dict = field(default_factory=dict)
    objective_fn: object = None

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            near, far = t.dims
            want = (self.m, self.n) if t.side == "left" else (self.n, self.m)
            if near != want[0] or (far is not None and far != want[1]):
                raise DimMismatch(f"{t.name} term on the {t.side} has dims {t.dims}, "
                                  f"problem is {self.m} x {self.n}")

    @property
    def certified(self):
        v = self.validity
        return v.sum_gram_nonneg_certified and v.sum_target_nonneg_certified

    def side_terms(self, side):
        return [t for t in self.terms if t.side == side]

    def generic_terms(self, F):
        """Objective summands computed term by term (no builder-specific formula)."""
        out = {}
        for i, t in enumerate(self.terms):
            H, G = (F.U, F.V) if t.side == "left" else (F.V, F.U)
            out[f"{t.side}_{t.name}_{i}"] = t.value(H, G)
        return out

    def objective_terms(self, F):
        if self.objective_fn is not None:
            return self.objective_fn(F)
        return self.generic_terms(F)

    def objective(self, F):
        return sum(self.objective_terms(F).values())

    def dense_gram_sum(self, side):
        """Materialize the summed Gram of one side; desk-scale checks only."""
        dim = self.m if side == "left" else self.n
        total = np.zeros((dim, dim))
        for t in self.side_terms(side):
            total += t.dense_gram()
        return total

    def dense_target_sum(self, side):
        """Materialize ``sum A_i^T A_i X_i`` (left, ``m x n``) or ``sum B_j B_j^T X_j^T``
        (right, ``n x m``); desk-scale checks only."""
        shape = (self.m, self.n) if side == "left" else (self.n, self.m)
        total = np.zeros(shape)
        for t in self.side_terms(side):
            T = t.dense_target()
            if T is not None:
                total += T
        return total


def _check_lambda(lam, upper=None):
    if lam < 0 or (upper is not None and lam > upper):
        rng_txt = f"[0, {upper}]" if upper is not None else "[0, inf)"
        raise LambdaOutOfRange(f"lambda={lam} outside {rng_txt}")


def _resolve_sigma(side, sigma, minimum):
    if sigma is None:
        return minimum
    if sigma < minimum - SIGMA_SLACK:
        raise InsufficientSigma(side, minimum, sigma)
    return float(sigma)


def build_problem_one_sided_orthogonal(C, r, lam=0.1, sigma=None):
    """MU problem for ``||A(X - UV^T)||^2 + lam ||P_A^perp UV^T||^2 + sigma ||1^T(X - UV^T)||^2``.

    Needs ``A`` with orthonormal rows and ``lam`` in [0, 1]. ``sigma=None``
    picks the smallest certified shift.
    """
    _check_lambda(lam, 1.0)
    defect = C.A.orthonormality_defect()
    if defect >= ORTHO_TOL:
        raise ValueError(f"operator rows are not orthonormal (defect {defect:.2e})")
    sigma = _resolve_sigma("left", sigma, shift_sigma(C.A))
    terms = [SketchTerm("left", C.A.near, C.Y.T, weight=1.0 - lam)]
    if lam:
        terms.append(ScaledIdentityTerm("left", lam, C.m))
    if sigma:
        terms.append(ShiftTerm("left", sigma, C.row_sums, C.m))
    lam = float(lam)

    def objective_fn(F):
        return one_sided_orthogonal_terms(C, F, lam, sigma)

    return SketchedMUProblem(C.m, C.n, int(r), terms, Validity(True, True),
                             "one_sided_orthogonal", {"lambda": lam, "sigma": sigma},
                             objective_fn)


def build_problem_one_sided_ridge(C, r, lam=0.1, sigma=None):
    """MU problem for ``||A(X - UV^T)||^2 + lam ||UV^T||^2 + sigma ||1^T(X - UV^T)||^2``."""
    _check_lambda(lam)
    sigma = _resolve_sigma("left", sigma, shift_sigma(C.A))
    terms = [SketchTerm("left", C.A.near, C.Y.T)]
    if sigma:
        terms.append(ShiftTerm("left", sigma, C.row_sums, C.m))
    if lam:
        terms.append(ScaledIdentityTerm("left", lam, C.m))
    lam = float(lam)

    def objective_fn(F):
        return one_sided_ridge_terms(C, F, lam, sigma)

    return SketchedMUProblem(C.m, C.n, int(r), terms, Validity(True, True),
                             "one_sided_ridge", {"lambda": lam, "sigma": sigma},
                             objective_fn)


def build_problem_two_sided(C, r, lam1=0.0, lam2=0.0, sigma1=None, sigma2=None):
    """MU problem for the two-sided objective with projector regularizers and shifts."""
    _check_lambda(lam1)
    _check_lambda(lam2)
    sigma1 = _resolve_sigma("left", sigma1, shift_sigma_regularized(C.A1, lam1, C.Q1))
    sigma2 = _resolve_sigma("right", sigma2, shift_sigma_regularized(C.A2, lam2, C.Q2))
    terms = [SketchTerm("left", C.A1.near, C.Y1.T)]
    if sigma1:
        terms.append(ShiftTerm("left", sigma1, C.row_sums, C.m))
    if lam1:
        terms.append(ProjectorComplementTerm("left", lam1, C.Q1))
    terms.append(SketchTerm("right", C.A2.near, C.Y2))
    if sigma2:
        terms.append(ShiftTerm("right", sigma2, C.col_sums, C.n))
    if lam2:
        terms.append(ProjectorComplementTerm("right", lam2, C.Q2))
    params = {"lambda1": float(lam1), "lambda2": float(lam2),
              "sigma1": sigma1, "sigma2": sigma2}

    def objective_fn(F):
        return two_sided_terms(C, F, params["lambda1"], params["lambda2"], sigma1, sigma2)

    return SketchedMUProblem(C.m, C.n, int(r), terms, Validity(True, True),
                             "two_sided", params, objective_fn)


# -- factored assembly ----------------------------------------------------------

class _Assembly:
    """Caches for updating factor ``H`` (rows on ``side``) with partner ``G`` fixed."""

    def __init__(self, P, side, H, G):
        self.H = H
        self.near = P.side_terms(side)
        far = P.side_terms(_other(side))
        self.GtG = G.T @ G
        self.gram_caches = [t.gram_cache(H) for t in self.near]
        self.near_targets = [(t, t.target_near_cache(G)) for t in self.near if _has_target(t)]
        self.far_targets = [(t, t.target_far_cache(G)) for t in far if _has_target(t)]
        self.far_quad = None
        for t in far:
            q = t.quad(G)
            self.far_quad = q if self.far_quad is None else self.far_quad + q

    def denominator_mean(self):
        p, r = self.H.shape
        total = 0.0
        if self.near:
            colsum = sum(t.gram_colsum(self.H, c) for t, c in zip(self.near, self.gram_caches))
            total += float(colsum @ self.GtG.sum(axis=1))
        if self.far_quad is not None:
            total += float(self.H.sum(axis=0) @ self.far_quad.sum(axis=1))
        return total / (p * r)

    def rows(self, start, stop):
        """Denominator and numerator rows ``start:stop``."""
        Hb = self.H[start:stop]
        gram = None
        for t, c in zip(self.near, self.gram_caches):
            part = t.gram_rows(self.H, c, start, stop)
            if gram is None:
                gram = part
            else:
                gram += part
        if gram is not None:
            D = gram @ self.GtG
            if self.far_quad is not None:
                D += Hb @ self.far_quad
        elif self.far_quad is not None:
            D = Hb @ self.far_quad
        else:
            D = np.zeros_like(Hb)
        N = np.zeros_like(Hb)
        for t, c in self.near_targets:
            N += t.target_near_rows(c, start, stop)
        for t, c in self.far_targets:
            N += t.target_far_rows(c, start, stop)
        return D, N


def _mu_update(P, side, H, G, guard, block=BLOCK_ROWS):
    """Multiplicative update of ``H`` in place."""
    asm = _Assembly(P, side, H, G)
    mean = asm.denominator_mean()
    g = guard * mean if mean > 0 else guard
    for start in range(0, H.shape[0], block):
        stop = min(start + block, H.shape[0])
        D, N = asm.rows(start, stop)
        # certified sums are nonnegative; clip rounding noise at the boundary
        np.maximum(N, 0.0, out=N)
        np.maximum(D, g, out=D)
        np.divide(N, D, out=N)
        N *= H[start:stop]
        if not np.isfinite(N).all():
            raise NonFiniteUpdate(f"non-finite {side} factor entries in rows {start}:{stop}")
        H[start:stop] = N


def _gradient(P, side, H, G, block=BLOCK_ROWS):
    asm = _Assembly(P, side, H, G)
    grad = np.empty_like(H)
    for start in range(0, H.shape[0], block):
        stop = min(start + block, H.shape[0])
        D, N = asm.rows(start, stop)
        np.subtract(D, N, out=D)
        grad[start:stop] = D
    return grad


def _check_factors(P, F):
    if F.U.shape != (P.m, P.r) or F.V.shape != (P.n, P.r):
        raise DimMismatch(f"factors {F.U.shape}, {F.V.shape} do not fit a "
                          f"{P.m} x {P.n} rank-{P.r} problem")


def mu_step(P, F, guard=1e-12):
    """One alternating multiplicative update; ``V`` is updated with the new ``U``.

    ``guard`` is relative: every denominator entry is raised to at least
    ``guard * mean(denominator)``. Raising a denominator only shortens the
    step, so descent is kept, and exact fixed points stay exact.
    """
    _check_factors(P, F)
    U = F.U.copy()
    V = F.V.copy()
    _mu_update(P, "left", U, V, guard)
    _mu_update(P, "right", V, U, guard)
    return FactorPair(U, V)


def gradients(P, F):
    """Gradients of the 1/2-scaled objective with respect to ``U`` and ``V``."""
    _check_factors(P, F)
    return _gradient(P, "left", F.U, F.V), _gradient(P, "right", F.V, F.U)


def pgd_step(P, F, alpha):
    """Projected gradient step on ``U`` and ``V`` simultaneously from the same iterate.

    The gradient is that of the 1/2-scaled objective, so ``alpha`` here
    corresponds to ``alpha / 2`` on the unscaled one.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    gU, gV = gradients(P, F)
    gU *= -alpha
    gU += F.U
    gV *= -alpha
    gV += F.V
    if not (np.isfinite(gU).all() and np.isfinite(gV).all()):
        raise NonFiniteUpdate("non-finite projected gradient step")
    np.maximum(gU, 0.0, out=gU)
    np.maximum(gV, 0.0, out=gV)
    return FactorPair(gU, gV)


def init_factors(m, n, r, seed, scale=1.0):
    """Strictly positive factors with i.i.d. entries in ``(scale/100, scale)``."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    lo = 1e-2 * scale
    factors = []
    for rows, stream in ((m, rng.INIT_U), (n, rng.INIT_V)):
        M = rng.uniform((rows, r), seed, stream)
        M *= scale - lo
        M += lo
        factors.append(M)
    return FactorPair(*factors)


def default_init_scale(row_sums, m, r):
    """``sqrt(mean(1^T X) / (m r))`` so that ``U V^T`` starts near the data scale."""
    mean = float(np.mean(row_sums))
    return float(np.sqrt(mean / (m * r))) if mean > 0 else 1.0


# -- driver -------------------------------------------------------------------

@dataclass
class SolverConfig:
    max_iters: int = 1000
    rel_tol: float = 0.0
    window: int = 10
    target_objective: float = None
    step_alpha: float = 1e-3
    denom_guard: float = 1e-12
    seed: int = 0
    log_every: int = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be >= 0")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.denom_guard <= 0:
            raise ValueError("denom_guard must be > 0")
        if self.step_alpha <= 0:
            raise ValueError("step_alpha must be > 0")

    @property
    def effective_log_every(self):
        if self.log_every:
            return int(self.log_every)
        return 1 if self.max_iters < 10_000 else 100


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    objective: float
    wall_ms: float
    terms: dict


@dataclass
class SolveResult:
    factors: FactorPair
    trace: list
    stop_reason: str
    iterations: int

    @property
    def objectives(self):
        return np.array([e.objective for e in self.trace])


def solve(P, F0, config=None, method="mu", callback=None, check_every=100, inplace=False):
    """Iterate MU or PGD from ``F0`` until a stopping rule fires.

    Stopping rules, checked at logged iterations: objective at or below
    ``target_objective`` (``target_reached``); objective at or below the
    rounding level of the data energy, where further steps only move
    roundoff (``exact_fit``); objective non-finite or above
    ``1e6`` times the initial one (``diverged``); relative decrease over the
    last ``window`` logged values at most ``rel_tol`` (plus rounding of the
    data energy) when ``rel_tol > 0``
    (``tol_reached``). ``callback(iteration, factors)`` is called every
    ``check_every`` iterations and stops the run with ``target_reached`` when it
    returns True. The last iteration is always in the trace. With
    ``inplace=True`` the arrays of ``F0`` are overwritten instead of copied.
    """
    config = config or SolverConfig()
    if method not in ("mu", "pgd"):
        raise ValueError(f"unknown method {method!r}")
    if method == "mu" and not P.certified:
        raise ValueError("multiplicative updates need a certified problem")
    _check_factors(P, F0)
    U, V = (F0.U, F0.V) if inplace else (F0.U.copy(), F0.V.copy())
    log_every = config.effective_log_every
    trace = []
    t0 = time.perf_counter()

    def record(it):
        terms = P.objective_terms(_Pair(U, V))
        obj = float(sum(terms.values()))
        trace.append(TraceEntry(it, obj, 1e3 * (time.perf_counter() - t0), terms))
        return obj

    # decreases below rounding of the data energy count as stationary
    floor = 4 * np.finfo(float).eps * P.objective(_Pair(np.zeros((P.m, 1)), np.zeros((P.n, 1))))

    def verdict(obj):
        if not np.isfinite(obj) or obj > DIVERGENCE_FACTOR * max(trace[0].objective, floor, np.finfo(float).tiny):
            return "diverged"
        if config.target_objective is not None and obj <= config.target_objective:
            return "target_reached"
        if obj <= floor:
            return "exact_fit"
        if config.rel_tol > 0 and len(trace) > config.window:
            old = trace[-1 - config.window].objective
            if old - obj <= config.rel_tol * old + floor:
                return "tol_reached"
        return None

    reason = verdict(record(0))
    it = 0
    while reason is None and it < config.max_iters:
        it += 1
        try:
            if method == "mu":
                _mu_update(P, "left", U, V, config.denom_guard)
                _mu_update(P, "right", V, U, config.denom_guard)
            else:
                F = pgd_step(P, FactorPair(U, V), config.step_alpha)
                U, V = F.U, F.V
        except NonFiniteUpdate:
            reason = "diverged"
            break
        logged = it % log_every == 0 or it == config.max_iters
        if logged:
            reason = verdict(record(it))
        if reason is None and callback is not None and it % check_every == 0:
            if callback(it, _Pair(U, V)):
                reason = "target_reached"
    if reason is None:
        reason = "max_iters"
    if trace[-1].iteration != it:
        record(it)
    if not (np.isfinite(U).all() and np.isfinite(V).all()):
        U = np.nan_to_num(U, nan=0.0, posinf=0.0)
        V = np.nan_to_num(V, nan=0.0, posinf=0.0)
    return SolveResult(FactorPair(U, V), trace, reason, it)
