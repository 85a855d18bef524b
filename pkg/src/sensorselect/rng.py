"""SplitMix64 streams and the DiscreteUniform draw used by random selection.

Each random-search trial owns a stream seeded from ``(seed, trial)`` so a
trial's draws do not depend on how trials are split across workers. The
vectorized functions advance many streams at once and must stay in lockstep
with the scalar reference implementation :class:`SplitMix64`.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_TRIAL_GAMMA = 0xD1B54A32D192ED03


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_state(seed: int, trial: int) -> int:
    """Initial SplitMix64 state of the stream owned by ``trial``."""
    return mix64((mix64(seed & MASK64) + (trial + 1) * _TRIAL_GAMMA) & MASK64)


class SplitMix64:
    def __init__(self, state: int):
        self.state = state & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def discrete_uniform(self, n: int) -> int:
        """Uniform integer in ``1..n`` (Lemire's method on the top 32 bits)."""
        if not 1 <= n < (1 << 32):
            raise ValueError("n must be in [1, 2**32)")
        threshold = ((1 << 32) - n) % n
        while True:
            m = (self.next_u64() >> 32) * n
            if (m & 0xFFFFFFFF) >= threshold:
                return (m >> 32) + 1


# --- vectorized twins ----------------------------------------------------

_U = np.uint64


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> _U(30))
    z = z * _U(0xBF58476D1CE4E5B9)
    z = z ^ (z >> _U(27))
    z = z * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


def trial_states(seed: int, trials: np.ndarray) -> np.ndarray:
    base = _U(mix64(seed & MASK64))
    t = np.asarray(trials, dtype=np.uint64) + _U(1)
    return mix64_array(base + t * _U(_TRIAL_GAMMA))


def discrete_uniform_array(states: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``1..n`` for every stream; returns ``(values, new_states)``."""
    threshold = ((1 << 32) - n) % n
    states = states.copy()
    out = np.zeros(states.shape, dtype=np.int64)
    pending = np.ones(states.shape, dtype=bool)
    while pending.any():
        states[pending] = states[pending] + _U(GAMMA)
        x = mix64_array(states[pending])
        m = (x >> _U(32)) * _U(n)
        accept = (m & _U(0xFFFFFFFF)) >= _U(threshold)
        idx = np.flatnonzero(pending)
        out[idx[accept]] = (m[accept] >> _U(32)).astype(np.int64) + 1
        pending[idx[accept]] = False
    return out, states
