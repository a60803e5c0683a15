import numpy as np
import pytest

from sketchnmf import sketching as sk
from sketchnmf.objectives import FactorPair


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


def random_factors(gen, m, n, r, low=0.1):
    return FactorPair(gen.uniform(low, 1.0, (m, r)), gen.uniform(low, 1.0, (n, r)))


def random_one_sided(gen, m=12, n=9, k=4, kind="gaussian_iid", seed=3):
    X = gen.random((m, n))
    if kind == "gaussian_iid":
        A = sk.sample_gaussian_sketch(k, m, seed)
    elif kind == "orthonormal_rows":
        A = sk.sample_orthonormal_sketch(k, m, seed)
    else:
        A = sk.rangefinder_sketch(X, k, seed)
    return X, sk.compress_one_sided(X, A)


def random_two_sided(gen, m=12, n=9, k=4, seed=3):
    X = gen.random((m, n))
    A1 = sk.sample_gaussian_sketch(k, m, seed)
    A2 = sk.sample_gaussian_sketch(k, n, seed + 1, side="right")
    return X, sk.compress_two_sided(X, A1, A2)


def rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
