"""Counter-based pseudo-random number generation.

The core generator is SplitMix64: the i-th output is
``mix64(seed + (i+1) * GOLDEN mod 2^64)`` where ``mix64`` is the standard
SplitMix64 finalizer and GOLDEN is the 64-bit golden-ratio constant.  Because
the state is a plain counter, any output can be recomputed from (seed, i)
alone, replicas can be sharded without coordination, and outputs are batched
through numpy for speed without changing the stream.

Parallel streams: replica ``r`` of a run with master seed ``s`` uses
``stream_seed(s, r) = mix64(s XOR ((r+1) * GOLDEN mod 2^64))``.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_BUFFER_SIZE = 4096


def mix64(x: int) -> int:
    """SplitMix64 finalizer: a 64-bit bijective mixing function."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * _M1) & MASK64
    x = ((x ^ (x >> 27)) * _M2) & MASK64
    return x ^ (x >> 31)


def stream_seed(master_seed: int, stream: int) -> int:
    """Derive the seed of parallel stream `stream` from a master seed."""
    if stream < 0:
        raise ValueError("stream index must be nonnegative")
    return mix64((master_seed & MASK64) ^ (((stream + 1) * GOLDEN) & MASK64))


class CounterRng:
    """Deterministic SplitMix64 stream with numpy-batched output.

    The visible state is (seed, counter); `counter` equals the number of
    64-bit words consumed so far.  Two instances with equal seeds produce
    identical streams regardless of which convenience methods are called.
    """

    __slots__ = ("seed", "_counter", "_buf", "_idx")

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self._counter = 0
        self._buf: list[int] = []
        self._idx = 0

    def __repr__(self) -> str:  # state is (seed, words consumed)
        return f"CounterRng(seed={self.seed:#x}, counter={self.counter})"

    @property
    def counter(self) -> int:
        return self._counter - (len(self._buf) - self._idx)

    def _refill(self) -> None:
        lo = self._counter + 1
        idx = np.arange(lo, lo + _BUFFER_SIZE, dtype=np.uint64)
        z = np.uint64(self.seed) + idx * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        z = z ^ (z >> np.uint64(31))
        self._buf = z.tolist()
        self._idx = 0
        self._counter += _BUFFER_SIZE

    def u64(self) -> int:
        """Next raw 64-bit word."""
        if self._idx >= len(self._buf):
            self._refill()
        v = self._buf[self._idx]
        self._idx += 1
        return v

    def random(self) -> float:
        """Uniform float64 in [0, 1), 53 significant bits."""
        return (self.u64() >> 11) * 1.1102230246251565e-16  # 2**-53

    def exponential(self, rate: float = 1.0) -> float:
        """Exponential variate with the given rate (mean 1/rate)."""
        return -math.log(1.0 - self.random()) / rate

    def randbelow(self, n: int) -> int:
        """Exactly uniform integer in [0, n) (Lemire multiply + rejection)."""
        if n <= 0:
            raise ValueError("bound must be positive")
        if n == 1:
            return 0
        threshold = ((1 << 64) - n) % n
        while True:
            m = self.u64() * n
            if (m & MASK64) >= threshold:
                return m >> 64

    def spawn(self, stream: int) -> "CounterRng":
        """Independent child stream; deterministic in (self.seed, stream)."""
        return CounterRng(stream_seed(self.seed, stream))

    def numpy_rng(self, stream: int = 0) -> np.random.Generator:
        """Philox-backed numpy Generator keyed off this stream.

        Used by vectorized Monte Carlo estimators; Philox is itself a
        counter-based 64-bit generator, so determinism guarantees carry over.
        """
        return np.random.Generator(np.random.Philox(key=stream_seed(self.seed, stream)))
