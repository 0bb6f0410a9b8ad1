"""Counter-based random stream shared by the numba and numpy kernels.

Walker ``w`` of shard ``s`` under master seed ``m`` draws its ``t``-th uniform
as ``splitmix64(key + (t + 1) * GOLDEN)`` with ``key = mix(mix(m, s), w)``;
this is exactly the SplitMix64 sequence started from ``key``.  Because every
draw is a pure function of ``(m, s, w, t)``, both backends produce identical
walks, and adding shards or walkers never changes the existing ones.
"""

import numpy as np

from ._accel import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit
def _finalize(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit
def uniform_at(key, t):
    """``t``-th uniform in [0, 1) of the stream with ``key``."""
    z = key + (np.uint64(t) + np.uint64(1)) * np.uint64(0x9E3779B97F4A7C15)
    return float(_finalize(z) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


def uniforms(keys: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Vectorised :func:`uniform_at`."""
    with np.errstate(over="ignore"):
        z = keys + (t.astype(np.uint64) + np.uint64(1)) * GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _C1
        z = (z ^ (z >> np.uint64(27))) * _C2
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * _INV53


def mix(a: int, b: int) -> int:
    """Derive a child seed from ``(a, b)``; documented mixing function for substreams."""
    mask = (1 << 64) - 1
    z = (int(a) * 0x9E3779B97F4A7C15 + int(b) + 0x632BE59BD9B4E019) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return z ^ (z >> 31)


def shard_seed(master: int, shard: int) -> int:
    return mix(master, shard)


def walker_keys(master: int, shard: int, count: int, start: int = 0) -> np.ndarray:
    s = shard_seed(master, shard)
    return np.array([mix(s, start + w) for w in range(count)], dtype=np.uint64)
