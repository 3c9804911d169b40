"""SplitMix64 pseudo-random generator with an explicit integer state.

The state is a plain 64-bit integer, so draws are reproducible on every
platform and can be threaded through pure functions.
"""
from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """Return ``(output, next_state)``."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31), state


def uniform(state: int) -> tuple[float, int]:
    """Uniform float in [0, 1) built from the top 53 bits."""
    out, state = splitmix64(state)
    return (out >> 11) * (1.0 / (1 << 53)), state


def bernoulli(p: float, state: int) -> tuple[bool, int]:
    u, state = uniform(state)
    return u < p, state


def seed_state(seed: int) -> int:
    return seed & MASK64
