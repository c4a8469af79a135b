"""Deterministic normal/uniform streams on top of a counter-based generator.

Uniforms come from Philox-4x64 raw words (stable across numpy releases and
platforms); normals use Box-Muller with a fixed draw order so that a given
(seed, stream, sequence of calls) always yields the same values.
"""
import hashlib

import numpy as np

ALGORITHM = "philox4x64/box-muller"
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def _derive_stream_id(parent, tag):
    digest = hashlib.blake2b(f"{parent}:{tag}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """A seeded stream of uniform and standard-normal variates.

    ``draws`` counts the raw 64-bit words consumed so far. Every normal
    costs exactly one word (pairs of normals share a pair of words; an odd
    request still consumes a full pair).
    """

    algorithm = ALGORITHM

    def __init__(self, seed, stream=0):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {seed}")
        self.seed = seed
        self.stream = int(stream)
        key = np.array([seed, self.stream], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)
        self.draws = 0

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream}, draws={self.draws})"

    def spawn(self, tag):
        """Independent child stream; depends only on (seed, stream, tag)."""
        return RngStream(self.seed, _derive_stream_id(self.stream, tag))

    def _raw(self, n):
        self.draws += n
        return self._bitgen.random_raw(n)

    def uniform(self, shape):
        """Uniforms in the half-open interval (0, 1]."""
        shape = _as_shape(shape)
        n = int(np.prod(shape))
        words = self._raw(n)
        return (((words >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _INV_2_53).reshape(shape)

    def integers(self, high, size):
        """Integers uniform on {0, ..., high - 1}."""
        if high < 1:
            raise ValueError("high must be >= 1")
        u = self.uniform(size)
        return np.minimum(np.floor((1.0 - u) * high), high - 1).astype(np.int64)

    def normal(self, shape):
        shape = _as_shape(shape)
        n = int(np.prod(shape))
        if n == 0:
            raise ValueError(f"cannot sample an empty shape {shape}")
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log(u[:, 0]))
        angle = _TWO_PI * u[:, 1]
        out = np.empty((pairs, 2))
        out[:, 0] = radius * np.cos(angle)
        out[:, 1] = radius * np.sin(angle)
        return out.reshape(-1)[:n].reshape(shape)


class ZeroRng:
    """Stand-in stream that returns zero noise; used to make samplers deterministic in tests."""

    algorithm = "zero"

    def __init__(self):
        self.draws = 0

    def spawn(self, tag):
        return ZeroRng()

    def normal(self, shape):
        shape = _as_shape(shape)
        self.draws += int(np.prod(shape))
        return np.zeros(shape)


def gaussian_sample(rng, shape):
    """i.i.d. N(0, 1) tensor of the given shape drawn from ``rng``."""
    return rng.normal(shape)


def _as_shape(shape):
    if np.isscalar(shape):
        shape = (int(shape),)
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ValueError(f"negative dimension in shape {shape}")
    return shape
