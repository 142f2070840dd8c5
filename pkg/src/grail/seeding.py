"""Deterministic seed derivation for multi-stage, multi-seed experiments.

Every pseudo-random stage of a run (data generation, parameter init,
augmentation draws, attack blocks, discretization) pulls its own stream
derived from (base_seed, seed index, stage tag).  Streams are independent:
consuming extra draws in one stage never shifts another stage's sequence.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, *components: int | str) -> int:
    """Mix a base seed with stage components into a 64-bit stream seed.

    Components may be integers or short tags like ``"encoder"`` or
    ``"attack:prbcd"``; strings are folded in bytewise so distinct tags
    yield unrelated streams.
    """
    state = _splitmix64(base_seed & _MASK64)
    for comp in components:
        if isinstance(comp, str):
            for byte in comp.encode("utf-8"):
                state = _splitmix64(state ^ byte)
        else:
            state = _splitmix64(state ^ (int(comp) & _MASK64))
    return state


def derive_rng(base_seed: int, *components: int | str) -> np.random.Generator:
    """A numpy Generator seeded from :func:`derive_seed`."""
    return np.random.default_rng(derive_seed(base_seed, *components))
