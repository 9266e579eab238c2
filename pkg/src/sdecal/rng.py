"""Counter-based Gaussian noise streams for reproducible simulation.

Every standard normal variate is a pure function of an address

    (seed, tag, step, particle, component)

so a run is reproducible regardless of execution order, worker count, or
how many variates other processes consumed.  The main process and the
independent replica process occupy disjoint address spaces through the
``tag`` field; the tangent process consumes no addresses at all because
it reuses the main increments.

The generator is Philox4x32-10.  One 128-bit counter block yields four
32-bit words, combined into two 53-bit uniforms and mapped to two
standard normals by Box-Muller, i.e. components 2j and 2j+1 share block
j.  A scalar implementation lives in ``_kernels`` for the numba path;
this module provides the vectorized numpy implementation plus the public
``NoiseSource`` wrapper.  Both are tested against the published
Philox4x32-10 known-answer vectors.
"""

from __future__ import annotations

import math

import numpy as np

# Philox4x32 round multipliers and Weyl key increments (Random123).
PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint32(0x9E3779B9)
PHILOX_W1 = np.uint32(0xBB67AE85)

TAG_MAIN = 0
TAG_REPLICA = 1

_MASK32 = np.uint64(0xFFFFFFFF)
_INV53 = 2.0 ** -53
_TWO_PI = 2.0 * math.pi


def philox4x32(c0, c1, c2, c3, key0, key1):
    """Philox4x32-10 block function, vectorized over the counters.

    Counter words are uint32 arrays (or scalars) of a common shape; the
    key is a fixed pair of uint32.  Returns four uint32 arrays.
    """
    c0 = np.asarray(c0, dtype=np.uint64)
    c1 = np.asarray(c1, dtype=np.uint64)
    c2 = np.asarray(c2, dtype=np.uint64)
    c3 = np.asarray(c3, dtype=np.uint64)
    k0 = np.uint64(np.uint32(key0))
    k1 = np.uint64(np.uint32(key1))
    w0 = np.uint64(PHILOX_W0)
    w1 = np.uint64(PHILOX_W1)
    for _ in range(10):
        p0 = PHILOX_M0 * c0
        p1 = PHILOX_M1 * c2
        hi0, lo0 = p0 >> np.uint64(32), p0 & _MASK32
        hi1, lo1 = p1 >> np.uint64(32), p1 & _MASK32
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = (k0 + np.uint64(w0)) & _MASK32
        k1 = (k1 + np.uint64(w1)) & _MASK32
    out = (np.uint32(c0), np.uint32(c1), np.uint32(c2), np.uint32(c3))
    return out


def _normals_from_words(x0, x1, x2, x3):
    """Box-Muller on two 53-bit uniforms built from four 32-bit words."""
    a = (np.uint64(x0) << np.uint64(32)) | np.uint64(x1)
    b = (np.uint64(x2) << np.uint64(32)) | np.uint64(x3)
    # (0, 1) exclusive on both ends: log and the angle stay finite.
    u1 = ((a >> np.uint64(11)).astype(np.float64) + 0.5) * _INV53
    u2 = ((b >> np.uint64(11)).astype(np.float64) + 0.5) * _INV53
    r = np.sqrt(-2.0 * np.log(u1))
    z0 = r * np.cos(_TWO_PI * u2)
    z1 = r * np.sin(_TWO_PI * u2)
    return z0, z1


def split_seed(seed: int) -> tuple[int, int]:
    """Split a 64-bit seed into the two 32-bit Philox key words."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & 0xFFFFFFFF, seed >> 32


class NoiseSource:
    """Addressable standard-normal stream with a 64-bit seed.

    Addresses are (tag, step, particle, component); see the module
    docstring for the block layout.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._key0, self._key1 = split_seed(self.seed)

    def normal(self, tag: int, step: int, particle: int, component: int) -> float:
        """Single variate at one address."""
        block, pos = divmod(int(component), 2)
        z0, z1 = _normals_from_words(
            *philox4x32(
                np.uint32(step),
                np.uint32(particle),
                np.uint32(tag),
                np.uint32(block),
                self._key0,
                self._key1,
            )
        )
        return float(z0 if pos == 0 else z1)

    def normals(self, tag: int, step: int, n_particles: int, dim: int) -> np.ndarray:
        """All variates of one step for one process, shape (N, dim)."""
        n_blocks = (dim + 1) // 2
        particles = np.repeat(np.arange(n_particles, dtype=np.uint32), n_blocks)
        blocks = np.tile(np.arange(n_blocks, dtype=np.uint32), n_particles)
        steps = np.full(particles.shape, step, dtype=np.uint32)
        tags = np.full(particles.shape, tag, dtype=np.uint32)
        z0, z1 = _normals_from_words(
            *philox4x32(steps, particles, tags, blocks, self._key0, self._key1)
        )
        out = np.empty((n_particles, 2 * n_blocks))
        out[:, 0::2] = z0.reshape(n_particles, n_blocks)
        out[:, 1::2] = z1.reshape(n_particles, n_blocks)
        return np.ascontiguousarray(out[:, :dim])

    def normals_span(self, tag: int, start_step: int, n_steps: int, particle: int, dim: int) -> np.ndarray:
        """Variates for one particle over a span of steps, shape (n_steps, dim).

        Row k equals normals(tag, start_step + k, ...)[particle]; single-path
        simulations use this to draw whole horizons in one vectorized call.
        """
        n_blocks = (dim + 1) // 2
        steps = np.repeat(
            np.arange(start_step, start_step + n_steps, dtype=np.uint32), n_blocks
        )
        blocks = np.tile(np.arange(n_blocks, dtype=np.uint32), n_steps)
        particles = np.full(steps.shape, particle, dtype=np.uint32)
        tags = np.full(steps.shape, tag, dtype=np.uint32)
        z0, z1 = _normals_from_words(
            *philox4x32(steps, particles, tags, blocks, self._key0, self._key1)
        )
        out = np.empty((n_steps, 2 * n_blocks))
        out[:, 0::2] = z0.reshape(n_steps, n_blocks)
        out[:, 1::2] = z1.reshape(n_steps, n_blocks)
        return np.ascontiguousarray(out[:, :dim])
