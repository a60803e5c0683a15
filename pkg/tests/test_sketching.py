import json

import numpy as np
import pytest

from sketchnmf import sketching as sk
from sketchnmf.errors import DimMismatch, InvalidDim, NegativeData
from sketchnmf.objectives import obj_one_sided_ridge, obj_two_sided
from sketchnmf.solvers import init_factors

from conftest import random_one_sided, random_two_sided


def _op(matrix, side="left", kind="gaussian_iid"):
    return sk.SketchOperator(np.asarray(matrix, dtype=float), kind, side, 0)


# sampling

def test_gaussian_one_by_one_sanity():
    A = sk.sample_gaussian_sketch(1, 1, 5)
    assert A.matrix.shape == (1, 1)
    assert abs(A.matrix[0, 0]) < 6.0


def test_gaussian_deterministic_per_seed():
    a = sk.sample_gaussian_sketch(4, 30, 42)
    b = sk.sample_gaussian_sketch(4, 30, 42)
    assert np.array_equal(a.matrix, b.matrix)


def test_gaussian_default_variance_and_right_shape():
    A = sk.sample_gaussian_sketch(50, 400, 1)
    assert abs(A.matrix.var() * 400 - 1) < 0.05
    B = sk.sample_gaussian_sketch(3, 20, 1, side="right")
    assert B.matrix.shape == (20, 3) and B.dim == 20 and B.k == 3


def test_gaussian_singular_values_in_window():
    A = sk.sample_gaussian_sketch(100, 2000, 0, variance=1 / 2000)
    s = np.linalg.svd(A.matrix, compute_uv=False)
    assert s.min() >= 0.5 and s.max() <= 1.5


def test_orthonormal_square_is_orthogonal():
    A = sk.sample_orthonormal_sketch(3, 3, 9)
    assert np.isclose(abs(np.linalg.det(A.matrix)), 1.0, atol=1e-8)


def test_orthonormal_singular_values_are_one():
    A = sk.sample_orthonormal_sketch(2, 5, 9)
    assert np.allclose(np.linalg.svd(A.matrix, compute_uv=False), 1.0, atol=1e-10)
    assert A.orthonormality_defect() < 1e-10


def test_orthonormal_norm_matches_projector(gen):
    A = sk.sample_orthonormal_sketch(4, 10, 2)
    M = gen.standard_normal((10, 6))
    PA = A.matrix.T @ A.matrix
    assert np.isclose(np.linalg.norm(A.matrix @ M), np.linalg.norm(PA @ M), rtol=1e-10)


def test_orthonormal_rejects_k_above_m():
    with pytest.raises(InvalidDim):
        sk.sample_orthonormal_sketch(6, 5, 0)


def test_rangefinder_exact_rank_two(gen):
    X = np.outer(gen.random(8) + 0.1, gen.random(7) + 0.1) + np.outer(gen.random(8), gen.random(7))
    A = sk.rangefinder_sketch(X, 4, 1)
    Am = A.matrix
    assert np.linalg.norm(X - Am.T @ (Am @ X)) / np.linalg.norm(X) < 1e-8
    assert A.k == 2 and A.requested_k == 4
    assert A.orthonormality_defect() < 1e-10


def test_rangefinder_identity_full_capture():
    A = sk.rangefinder_sketch(np.eye(5), 5, 3)
    assert np.linalg.norm(np.eye(5) - A.matrix.T @ A.matrix) < 1e-10


def test_rangefinder_right_side(gen):
    X = gen.random((6, 3)) @ gen.random((3, 9))
    B = sk.rangefinder_sketch(X, 4, 1, side="right")
    assert B.matrix.shape[0] == 9
    assert np.linalg.norm(X - X @ B.matrix @ B.matrix.T) < 1e-8 * np.linalg.norm(X)


def test_rangefinder_average_residual_bound():
    rng_ = np.random.default_rng(0)
    U, _ = np.linalg.qr(rng_.standard_normal((50, 40)))
    W, _ = np.linalg.qr(rng_.standard_normal((40, 40)))
    s = 1.0 / np.arange(1, 41)
    X = (U * s) @ W.T
    r, k = 5, 12
    tail = np.sqrt((s[r:] ** 2).sum())
    res = []
    for seed in range(100):
        A = sk.rangefinder_sketch(X, k, seed).matrix
        res.append(np.linalg.norm(X - A.T @ (A @ X)))
    assert np.mean(res) <= np.sqrt(1 + r / (k - r - 1)) * tail * 1.1


def test_rangefinder_bad_k():
    with pytest.raises(InvalidDim):
        sk.rangefinder_sketch(np.ones((3, 4)), 4, 0)


# shifts

def test_shift_sigma_forced_value():
    assert sk.shift_sigma(_op([[1.0, -1.0]])) == pytest.approx(1.0)


def test_shift_sigma_row_selection_is_zero():
    assert sk.shift_sigma(_op(np.eye(5)[[0, 3]])) == 0.0


def test_shift_sigma_matches_dense_oracle():
    A = sk.sample_gaussian_sketch(10, 50, 4)
    G = A.matrix.T @ A.matrix
    assert abs(sk.shift_sigma(A) - max(-G.min(), 0)) <= 1e-12


def test_shift_sigma_right_uses_outer_gram():
    B = sk.sample_gaussian_sketch(3, 11, 4, side="right")
    G = B.matrix @ B.matrix.T
    assert abs(sk.shift_sigma(B) - max(-G.min(), 0)) <= 1e-12


def test_shift_sigma_sketch_gram_rule():
    A = sk.sample_gaussian_sketch(4, 30, 2)
    G = A.matrix @ A.matrix.T
    assert sk.shift_sigma(A, rule="sketch_gram") == pytest.approx(max(-G.min(), 0))
    with pytest.raises(ValueError):
        sk.shift_sigma(A, rule="nope")


def test_shift_sufficiency_and_minimality():
    A = sk.sample_gaussian_sketch(5, 20, 8)
    s = sk.shift_sigma(A)
    G = A.matrix.T @ A.matrix
    assert (G + s).min() >= -1e-12
    assert (G + s - 2e-9).min() < 0


def test_shift_regularized_zero_lambda_reduces(gen):
    A = sk.sample_gaussian_sketch(4, 12, 1)
    Q, _ = np.linalg.qr(gen.standard_normal((12, 4)))
    assert sk.shift_sigma_regularized(A, 0.0, Q) == sk.shift_sigma(A)


def test_shift_regularized_full_basis_adds_nothing():
    A = _op(np.eye(6)[[1, 4]])
    Q = np.eye(6)
    assert sk.shift_sigma_regularized(A, 0.7, Q) == sk.shift_sigma(A) == 0.0


def test_shift_regularized_dense_oracle(gen):
    A = sk.sample_gaussian_sketch(4, 15, 6)
    Q, _ = np.linalg.qr(gen.standard_normal((15, 4)))
    G = A.matrix.T @ A.matrix
    H = G + 0.1 * (np.eye(15) - Q @ Q.T)
    expected = max(-G.min(), -H.min(), 0)
    assert abs(sk.shift_sigma_regularized(A, 0.1, Q) - expected) <= 1e-12


def test_shift_regularized_dim_mismatch(gen):
    A = sk.sample_gaussian_sketch(4, 15, 6)
    with pytest.raises(DimMismatch):
        sk.shift_sigma_regularized(A, 0.1, np.eye(14)[:, :3])


def test_approx_orthogonality_epsilon():
    assert sk.approx_orthogonality_epsilon(_op(np.eye(4))) == pytest.approx(0.0, abs=1e-15)
    assert sk.approx_orthogonality_epsilon(_op(2 * np.eye(4))) == pytest.approx(1.0)


# compression

def test_compress_zero_data():
    A = sk.sample_gaussian_sketch(2, 4, 0)
    C = sk.compress_one_sided(np.zeros((4, 3)), A)
    assert not C.Y.any() and not C.row_sums.any() and C.x_frob == 0


def test_compress_identity_sketch(gen):
    X = gen.random((5, 4))
    C = sk.compress_one_sided(X, _op(np.eye(5), kind="orthonormal_rows"))
    assert np.array_equal(C.Y, X)
    assert np.allclose(C.row_sums, X.sum(axis=0))


def test_compress_matches_naive_product(gen):
    X = gen.random((600, 7))
    A = sk.sample_gaussian_sketch(5, 600, 1)
    C = sk.compress_one_sided(X, A)
    assert np.allclose(C.Y, A.matrix @ X, rtol=1e-12, atol=1e-12)
    assert np.isclose(C.x_frob, np.linalg.norm(X), rtol=1e-14)


def test_compress_rejects_negative():
    X = np.ones((3, 3))
    X[1, 2] = -1
    with pytest.raises(NegativeData) as err:
        sk.compress_one_sided(X, sk.sample_gaussian_sketch(2, 3, 0))
    assert err.value.index == (1, 2)


def test_orthonormal_record_norm_identity(gen):
    X, C = random_one_sided(gen, 20, 8, 5, kind="orthonormal_rows")
    Am = C.A.matrix
    lhs = np.linalg.norm(X - Am.T @ (Am @ X)) ** 2
    assert np.isclose(lhs, C.x_frob**2 - np.linalg.norm(C.Y) ** 2, rtol=1e-8)
    assert C.x_frob >= np.linalg.norm(C.Y) - 1e-8


def test_two_sided_rank_one_core_nonzero():
    X = np.outer(np.arange(1, 6.0), np.arange(1, 5.0))
    A1 = sk.sample_gaussian_sketch(1, 5, 0)
    A2 = sk.sample_gaussian_sketch(1, 4, 1, side="right")
    core = A1.matrix @ X @ A2.matrix
    assert abs(core[0, 0]) > 1e-12


def test_two_sided_identity(gen):
    X = gen.random((4, 4))
    C = sk.compress_two_sided(X, _op(np.eye(4)), _op(np.eye(4), side="right"))
    assert np.array_equal(C.Y1, X) and np.array_equal(C.Y2, X)


def test_two_sided_fields_match_oracles(gen):
    X, C = random_two_sided(gen, 14, 10, 3)
    assert np.allclose(C.Y1, C.A1.matrix @ X)
    assert np.allclose(C.Y2, X @ C.A2.matrix)
    assert np.allclose(C.row_sums, X.sum(axis=0))
    assert np.allclose(C.col_sums, X.sum(axis=1))
    assert np.allclose(C.Q1.T @ C.Q1, np.eye(3), atol=1e-10)
    assert np.allclose(C.Q2.T @ C.Q2, np.eye(3), atol=1e-10)
    assert np.linalg.norm(C.Q1 @ (C.Q1.T @ C.Y2) - C.Y2) < 1e-8 * np.linalg.norm(C.Y2)
    assert np.linalg.norm(C.Q2 @ (C.Q2.T @ C.Y1.T) - C.Y1.T) < 1e-8 * np.linalg.norm(C.Y1)
    assert C.notes == ()


def test_two_sided_truncation_is_recorded():
    X = np.outer(np.arange(1, 7.0), np.arange(1, 6.0))
    A1 = sk.sample_gaussian_sketch(3, 6, 0)
    A2 = sk.sample_gaussian_sketch(3, 5, 1, side="right")
    C = sk.compress_two_sided(X, A1, A2)
    assert C.Q1.shape[1] == 1 and C.Q2.shape[1] == 1
    assert len(C.notes) == 2


def test_determinism_of_records(gen):
    X = gen.random((9, 6))
    c1 = sk.compress_one_sided(X, sk.rangefinder_sketch(X, 3, 11))
    c2 = sk.compress_one_sided(X, sk.rangefinder_sketch(X, 3, 11))
    assert np.array_equal(c1.Y, c2.Y) and np.array_equal(c1.A.matrix, c2.A.matrix)


# storage and serialization

def test_storage_one_sided_element_count():
    A = sk.sample_gaussian_sketch(10, 200, 0)
    C = sk.compress_one_sided(np.ones((200, 200)), A)
    assert C.Y.shape == (10, 200)
    el = sk.storage_elements(C)
    assert el["sketch"] == 10 * (200 + 200)
    assert el["sums"] == 200


def test_storage_ratio_at_reported_sizes():
    # one-sided: A (k x m) plus XA-sized sketch (k x n); two-sided doubles it
    m = n = 1000
    k = 20
    assert k * (m + n) == 40_000 and k * (m + n) / (m * n) == 0.04
    assert 2 * k * (m + n) / (m * n) == 0.08


def test_save_load_round_trip_one_sided(tmp_path, gen):
    X, C = random_one_sided(gen, 10, 7, 3)
    manifest = sk.save_compressed(C, tmp_path, sigma=sk.shift_sigma(C.A))
    assert set(["kind", "side", "seed", "k", "m", "n", "x_frob", "sigma"]) <= set(manifest)
    D, man = sk.load_compressed(tmp_path)
    F = init_factors(10, 7, 2, 0)
    assert obj_one_sided_ridge(C, F, 0.1, man["sigma"]) == obj_one_sided_ridge(D, F, 0.1, manifest["sigma"])
    assert json.loads((tmp_path / "manifest.json").read_text())["k"] == 3


def test_save_load_round_trip_two_sided(tmp_path, gen):
    X, C = random_two_sided(gen, 10, 7, 3)
    sk.save_compressed(C, tmp_path, sigma={"left": 0.1, "right": 0.2})
    D, man = sk.load_compressed(tmp_path)
    F = init_factors(10, 7, 2, 0)
    assert obj_two_sided(C, F, 0.1, 0.2, 0.3, 0.4) == obj_two_sided(D, F, 0.1, 0.2, 0.3, 0.4)
    assert man["side"] == "both" and man["sigma"]["right"] == 0.2
