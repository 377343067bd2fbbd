"""Counter-derived xoshiro256** streams usable from numba kernels.

Every replication ``r`` of a run seeded with ``master_seed`` gets its own
stream whose state is a pure function of ``(master_seed, r)``. Results
therefore never depend on how replications are split across workers.
"""

import numpy as np
from numba import njit

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def _splitmix(x):
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31)), x + _GOLDEN


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def seed_state(master_seed, replication):
    """Fill a fresh 4-word xoshiro state for one replication."""
    h, _ = _splitmix(np.uint64(master_seed))
    h, _ = _splitmix(h ^ np.uint64(replication))
    state = np.empty(4, dtype=np.uint64)
    x = h
    for i in range(4):
        out, x = _splitmix(x)
        state[i] = out
    return state


@njit(cache=True, inline="always")
def next_u64(state):
    result = _rotl(state[1] * np.uint64(5), 7) * np.uint64(9)
    t = state[1] << np.uint64(17)
    state[2] ^= state[0]
    state[3] ^= state[1]
    state[1] ^= state[2]
    state[0] ^= state[3]
    state[2] ^= t
    state[3] = _rotl(state[3], 45)
    return result


@njit(cache=True, inline="always")
def uniform(state):
    """Uniform double on the half-open interval (0, 1]."""
    return (float(next_u64(state) >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)


def master_seed_int(seed):
    """Reduce an arbitrary Python int to the 64-bit seed word."""
    return int(seed) & _MASK
