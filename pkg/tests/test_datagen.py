import numpy as np
import pytest

from sketchnmf.datagen import (SyntheticSpec, add_relative_noise, load_matrix, save_matrix,
                               synthetic_lognormal)
from sketchnmf.errors import DimOverflow, InvalidDim, NegativeData, ParseError


def test_synthetic_positive_exact_rank_deterministic():
    X, F = synthetic_lognormal(SyntheticSpec(200, 200, 10, seed=3))
    assert (X > 0).all()
    s = np.linalg.svd(X, compute_uv=False)
    assert s[10] / s[0] < 1e-10
    Y, G = synthetic_lognormal(SyntheticSpec(200, 200, 10, seed=3))
    assert np.array_equal(X, Y)
    assert np.array_equal(X, F.U @ F.V.T)


def test_synthetic_lognormal_marginals():
    _, F = synthetic_lognormal(SyntheticSpec(2000, 10, 5, seed=1))
    logs = np.log(F.U)
    assert abs(logs.mean()) < 0.05 and abs(logs.std() - 1) < 0.05


def test_spec_validation():
    with pytest.raises(InvalidDim):
        SyntheticSpec(5, 4, 6)
    with pytest.raises(ValueError):
        SyntheticSpec(5, 4, 2, distribution="gamma")


def test_noise_is_relative_and_clipped():
    X, _ = synthetic_lognormal(SyntheticSpec(50, 40, 3, seed=0))
    Y = add_relative_noise(X, 0.01, 0)
    assert (Y >= 0).all()
    assert np.linalg.norm(Y - X) / np.linalg.norm(X) == pytest.approx(0.01, rel=0.1)
    Z = add_relative_noise(np.ones((3, 3)) * 1e-3, 100.0, 0)
    assert (Z >= 0).all() and (Z == 0).any()


def test_load_csv_literal(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("1,2\n3,4\n")
    assert np.array_equal(load_matrix(p, "csv_dense"), [[1, 2], [3, 4]])


def test_load_matrix_market_literal(tmp_path):
    p = tmp_path / "x.mtx"
    p.write_text("%%MatrixMarket matrix coordinate real general\n% comment\n2 2 1\n1 2 5.0\n")
    assert np.array_equal(load_matrix(p, "matrix_market"), [[0, 5], [0, 0]])


@pytest.mark.parametrize("fmt", ["csv_dense", "matrix_market"])
def test_round_trip(tmp_path, fmt):
    X = np.random.default_rng(0).random((7, 5))
    X[2, 3] = 0.0
    p = tmp_path / "x.dat"
    save_matrix(p, X, fmt)
    Y = load_matrix(p, fmt)
    assert np.abs(X - Y).max() <= 1e-15


def test_parse_errors_report_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3,x\n")
    with pytest.raises(ParseError) as err:
        load_matrix(p)
    assert err.value.line == 2
    p.write_text("1,2\n3\n")
    with pytest.raises(ParseError):
        load_matrix(p)
    q = tmp_path / "bad.mtx"
    q.write_text("%%MatrixMarket matrix array real general\n1 1\n")
    with pytest.raises(ParseError) as err:
        load_matrix(q, "matrix_market")
    assert err.value.line == 1
    q.write_text("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n")
    with pytest.raises(ParseError) as err:
        load_matrix(q, "matrix_market")
    assert err.value.line == 3


def test_negative_and_budget(tmp_path):
    p = tmp_path / "neg.csv"
    p.write_text("1,2\n3,-4\n")
    with pytest.raises(NegativeData) as err:
        load_matrix(p)
    assert err.value.index == (1, 1)
    q = tmp_path / "big.mtx"
    q.write_text("%%MatrixMarket matrix coordinate real general\n100000 100000 0\n")
    with pytest.raises(DimOverflow):
        load_matrix(q, "matrix_market")
    with pytest.raises(DimOverflow):
        load_matrix(p, budget=3)
