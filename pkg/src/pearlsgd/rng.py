"""Counter-based random streams keyed by (seed, player, iteration, replicate).

Every draw is a pure function of its coordinates, so results do not depend on
execution order, thread count, or how many replicates are simulated together.
The bit mixer is the SplitMix64 finalizer applied twice per output word.
"""
from dataclasses import dataclass

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _C1
        z = (z ^ (z >> np.uint64(27))) * _C2
    return z ^ (z >> np.uint64(31))


def _fold(h, value):
    with np.errstate(over="ignore"):
        return _mix(h ^ (np.asarray(value, dtype=np.uint64) * _GOLDEN + _GOLDEN))


@dataclass(frozen=True)
class RngStream:
    """Factory of reproducible draws for one experiment.

    ``master_seed`` is reduced modulo 2**64. Replicates may be passed as an
    integer or an array, in which case every produced array gains a leading
    replicate axis.
    """

    master_seed: int = 0

    def draw(self, player, iteration, replicate=0):
        return Draw(self, int(player), int(iteration), replicate)


class Draw:
    """A consumable source of variates for one (player, iteration) coordinate.

    Successive calls consume successive counters, so the same sequence of
    calls always returns the same numbers.
    """

    def __init__(self, stream, player, iteration, replicate):
        self.stream = stream
        self.player = player
        self.iteration = iteration
        self.batched = np.ndim(replicate) > 0
        self.replicate = np.atleast_1d(np.asarray(replicate, dtype=np.int64))
        h = _mix(np.uint64(stream.master_seed & _MASK64))
        h = _fold(h, player)
        h = _fold(h, iteration)
        self._key = _fold(h, self.replicate.astype(np.uint64))
        self._offset = 0

    @property
    def draw_id(self):
        """Coordinates plus the counter window consumed so far."""
        return (self.stream.master_seed, self.player, self.iteration,
                tuple(int(r) for r in self.replicate), self._offset)

    def _bits(self, count):
        counters = np.arange(self._offset, self._offset + count, dtype=np.uint64)
        self._offset += count
        with np.errstate(over="ignore"):
            return _mix(_mix(self._key[:, None] ^ (counters[None, :] * _GOLDEN)) + _GOLDEN)

    def _shape(self, arr, size):
        arr = arr.reshape((len(self.replicate),) + tuple(np.atleast_1d(size)))
        return arr if self.batched else arr[0]

    def uniform(self, size=1):
        """Uniform variates on [0, 1) with 53 random bits."""
        count = int(np.prod(size))
        u = (self._bits(count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return self._shape(u, size)

    def normal(self, size=1):
        """Standard normal variates (Box-Muller on two uniform streams)."""
        count = int(np.prod(size))
        u1 = ((self._bits(count) >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53
        u2 = (self._bits(count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return self._shape(z, size)

    def integers(self, high, size=1):
        """Integers uniform on {0, ..., high-1}."""
        u = self.uniform(size)
        return np.minimum((u * high).astype(np.int64), high - 1)
