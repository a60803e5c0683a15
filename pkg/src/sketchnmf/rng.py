"""Portable random streams.

Every draw comes from Philox4x64-10 keyed by ``(seed, stream)`` with the
counter starting at zero. Uniforms use the top 53 bits of each 64-bit word
and normals use Box-Muller, so the same seed yields the same numbers in any
language that implements Philox.
"""
import numpy as np

# stream ids; never renumber, seeds must stay portable
DATA_U = 1
DATA_V = 2
SKETCH_LEFT = 3
RANGEFINDER_LEFT = 4
INIT_U = 5
INIT_V = 6
NOISE = 7
SKETCH_RIGHT = 8
RANGEFINDER_RIGHT = 9

_MASK64 = (1 << 64) - 1
_TWO_PI = 2.0 * np.pi


def _raw(seed, stream, count):
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    bits = np.random.Philox(key=seed | (int(stream) << 64))
    return bits.random_raw(count)


def uniform(shape, seed, stream):
    """Uniform draws in the open interval (0, 1)."""
    n = int(np.prod(shape))
    raw = _raw(seed, stream, n)
    raw >>= np.uint64(11)
    out = raw.astype(np.float64)
    del raw
    out += 0.5
    out *= 2.0**-53
    return out.reshape(shape)


def standard_normal(shape, seed, stream):
    n = int(np.prod(shape))
    half = (n + 1) // 2
    u = uniform((2 * half,), seed, stream)
    radius = np.sqrt(-2.0 * np.log(u[0::2]))
    angle = _TWO_PI * u[1::2]
    z = np.empty(2 * half)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:n].reshape(shape)
