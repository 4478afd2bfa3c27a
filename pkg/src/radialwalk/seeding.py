"""Deterministic substream derivation for parallel Monte Carlo.

Each trajectory gets its own PCG64 stream whose seed is a splitmix64-style
mix of the master seed and the trajectory index.  Results are therefore
independent of how trajectories are batched or scheduled across workers.
"""

import numpy as np

MASK64 = (1 << 64) - 1

# splitmix64 constants (Steele, Lea, Flood 2014)
SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MIX_MUL_1 = 0xBF58476D1CE4E5B9
_MIX_MUL_2 = 0x94D049BB133111EB


def mix64(value: int) -> int:
    """splitmix64 finalizer; a bijection on 64-bit integers."""
    z = value & MASK64
    z = ((z ^ (z >> 30)) * _MIX_MUL_1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX_MUL_2) & MASK64
    return z ^ (z >> 31)


def substream_seed(master_seed: int, index: int) -> int:
    """Seed of trajectory `index`: the (index+1)-th splitmix64 output from master_seed."""
    if index < 0:
        raise ValueError(f"trajectory index must be >= 0, got {index}")
    state = (master_seed + (index + 1) * SPLITMIX_GAMMA) & MASK64
    return mix64(state)


def substream_seeds(master_seed: int, count: int) -> np.ndarray:
    """Seeds for trajectories 0..count-1 as a uint64 array."""
    return np.array(
        [substream_seed(master_seed, i) for i in range(count)], dtype=np.uint64
    )


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))
