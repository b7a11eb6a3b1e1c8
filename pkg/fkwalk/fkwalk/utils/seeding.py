import numpy as np
from scipy.special import ndtri

GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX_MULTIPLIERS = (np.uint64(0xBF58476D1CE4E5B9), np.uint64(0x94D049BB133111EB))
MIX_SHIFTS = (np.uint64(30), np.uint64(27), np.uint64(31))

# 52 random bits, offset by half a unit, land strictly inside (0, 1)
UNIT_SCALE = 2.0**-52


def mix64(z: np.ndarray) -> np.ndarray:
    """
    SplitMix64 finaliser: a 64-bit avalanche mix where every input bit affects every
    output bit. All arithmetic wraps modulo 2**64.

    Args:
        z: uint64 array to mix

    Returns:
        np.ndarray: mixed uint64 array of the same shape
    """
    z = np.asarray(z, dtype=np.uint64)
    # 0-d inputs become numpy scalars, which would warn on the intended wraparound
    with np.errstate(over="ignore"):
        z = (z ^ (z >> MIX_SHIFTS[0])) * MIX_MULTIPLIERS[0]
        z = (z ^ (z >> MIX_SHIFTS[1])) * MIX_MULTIPLIERS[1]
    return z ^ (z >> MIX_SHIFTS[2])


def combine(*keys) -> np.ndarray:
    """
    Fold a sequence of integer keys (scalars or broadcastable arrays) into one 64-bit
    value by chaining mix64 over golden-ratio offsets. The result is a pure function of
    the keys and their order, which makes it usable as a reproducible stream seed.

    Args:
        keys: non-negative integers or integer arrays

    Returns:
        np.ndarray: uint64 array with the broadcast shape of the keys
    """
    arrays = [np.asarray(key, dtype=np.uint64) for key in keys]
    state = np.zeros(np.broadcast_shapes(*(a.shape for a in arrays)), dtype=np.uint64)
    with np.errstate(over="ignore"):
        for key in arrays:
            state = mix64(state + GOLDEN_GAMMA + key * GOLDEN_GAMMA)
    return state


def counter_uniforms(seeds: np.ndarray, counter: np.ndarray | int) -> np.ndarray:
    """
    Counter-based uniform draws: the value for (seed, counter) is a hash of the two, so
    any element of any stream can be produced without generating the ones before it.

    Args:
        seeds: uint64 stream seeds
        counter: position in the stream, broadcast against seeds

    Returns:
        np.ndarray: floats in the open interval (0, 1)
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    counter = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = mix64(seeds + (counter + np.uint64(1)) * GOLDEN_GAMMA) >> np.uint64(12)
    return (bits.astype(np.float64) + 0.5) * UNIT_SCALE


def counter_normals(seeds: np.ndarray, counter: np.ndarray | int) -> np.ndarray:
    """Standard normal draws by inverse transform of counter_uniforms."""
    return ndtri(counter_uniforms(seeds, counter))
