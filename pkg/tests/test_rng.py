import numpy as np

from sketchnmf import rng


def test_uniform_is_deterministic_and_open_interval():
    a = rng.uniform((1000,), 7, rng.INIT_U)
    b = rng.uniform((1000,), 7, rng.INIT_U)
    assert np.array_equal(a, b)
    assert (a > 0).all() and (a < 1).all()


def test_streams_and_seeds_are_independent():
    a = rng.uniform((50,), 7, rng.INIT_U)
    assert not np.array_equal(a, rng.uniform((50,), 7, rng.INIT_V))
    assert not np.array_equal(a, rng.uniform((50,), 8, rng.INIT_U))


def test_normal_moments():
    z = rng.standard_normal((200_000,), 1, rng.NOISE)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1) < 0.01


def test_odd_length_normal_is_prefix_of_even():
    assert np.array_equal(rng.standard_normal((5,), 3, 1), rng.standard_normal((6,), 3, 1)[:5])
