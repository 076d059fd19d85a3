"""Counter-based uniform streams.

Every uniform used by the samplers is a pure function of ``(stream_seed, k)``
through the SplitMix64 finalizer, so a replica's draws do not depend on how
replicas are batched or distributed over workers.

Replica ``i`` of an experiment with master seed ``s`` uses the stream seed
``hash64(s, i)``; its ``k``-th uniform is ``SplitMix64`` output number ``k+1``
started from that seed.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_REPLICA_SALT = np.uint64(0xD1B54A32D192ED03)
_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0 ** -53


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def as_seed(seed: int) -> np.uint64:
    """Reduce an arbitrary Python integer to a 64-bit seed."""
    return np.uint64(int(seed) & _MASK64)


def hash64(master_seed: int, index) -> np.ndarray:
    """Derive per-replica stream seeds from a master seed."""
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix(np.asarray(as_seed(master_seed), dtype=np.uint64) + _GOLDEN)
        return _mix(base ^ (idx * _REPLICA_SALT + _GOLDEN))


def replica_seed(master_seed: int, index: int) -> int:
    return int(hash64(master_seed, np.array([index]))[0])


def uniforms(stream_seeds, step: int) -> np.ndarray:
    """Uniforms in (0, 1] for draw number ``step`` of each stream."""
    seeds = np.asarray(stream_seeds, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix(seeds + _GOLDEN * np.uint64(step + 1))
    return ((z >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_M53


def uniform_block(stream_seeds, steps: int, start: int = 0) -> np.ndarray:
    """Matrix of uniforms with one row per stream and ``steps`` columns."""
    seeds = np.asarray(stream_seeds, dtype=np.uint64)
    k = np.arange(start + 1, start + steps + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix(seeds[:, None] + _GOLDEN * k[None, :])
    return ((z >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_M53
