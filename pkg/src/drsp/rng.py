"""Counter-based uniform draws keyed by (seed, stream).

Every measurement draw is a pure function of its key, so a run's transcript
does not depend on evaluation order, batching, or thread count. The mixer is
SplitMix64, which numpy can evaluate over whole arrays of keys at once.
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _as_u64(x) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        return np.array([int(x) & _MASK], dtype=np.uint64)
    return np.asarray(x).astype(np.uint64)


def splitmix64(x) -> np.ndarray:
    z = _as_u64(x)
    with np.errstate(over="ignore"):
        z = z + _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *indices: int) -> int:
    """Child seed for a sub-run, e.g. ``derive_seed(master, grid_point, shot)``."""
    z = splitmix64(seed)
    for i in indices:
        z = splitmix64(z ^ splitmix64(int(i) + 1))
    return int(z[0])


def derive_seeds(seed: int, count: int, *prefix: int) -> np.ndarray:
    """Vectorized ``[derive_seed(seed, *prefix, i) for i in range(count)]``."""
    z = splitmix64(seed)
    for i in prefix:
        z = splitmix64(z ^ splitmix64(int(i) + 1))
    shots = np.arange(1, count + 1, dtype=np.uint64)
    return splitmix64(z ^ splitmix64(shots))


def keyed_uniform(seed, stream: int) -> np.ndarray:
    """Uniform doubles in [0, 1) for each seed in ``seed`` on the given stream."""
    z = splitmix64(splitmix64(seed) ^ splitmix64(int(stream) + 1))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def draw(seed: int, stream: int) -> float:
    return float(keyed_uniform(seed, stream)[0])
