"""Counter-based random streams.

Every stream is keyed by (seed, path index, role), realized as a Philox
generator with key = [path, seed] and the role placed in the top counter
word (streams for different roles start 2**192 blocks apart, so they never
overlap).  Draws for one path therefore never depend on how many other
paths are simulated, which worker processed them, or in what order --
the property the reproducibility and worker-count determinism tests rely on.
"""
from __future__ import annotations

import numpy as np

ROLE_BROWNIAN = 0
ROLE_SWITCH = 1
ROLE_VALIDATE = 2

_MASK64 = (1 << 64) - 1


def stream(seed: int, path_index: int, role: int) -> np.random.Generator:
    """Generator for the (seed, path, role) stream."""
    key = np.array([path_index & _MASK64, seed & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, role & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def brownian_increments(seed: int, path_index: int, n_steps: int, dim: int, dt: float) -> np.ndarray:
    """Increments of a dim-dimensional Brownian motion on n_steps steps of size dt."""
    g = stream(seed, path_index, ROLE_BROWNIAN)
    return g.standard_normal((n_steps, dim)) * np.sqrt(dt)


def switch_uniforms(seed: int, path_index: int, n_steps: int) -> np.ndarray:
    """Uniform [0, 1) draws feeding the per-step regime transition sampler."""
    g = stream(seed, path_index, ROLE_SWITCH)
    return g.random(n_steps)
