"""Splittable counter-based random number generator.

Every stream is fully determined by (seed, split path), so corpora, init,
and batch order are bit-reproducible regardless of evaluation order or
thread scheduling.  Draw quality comes from the 64-bit finalizer of
splitmix64; streams are decorrelated by hashing split labels into the key.
"""

from math import cos, log, pi, sin, sqrt

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _fin(z):
    # splitmix64 finalizer
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _label_hash(label):
    if isinstance(label, int):
        return _fin(label ^ 0x6A09E667F3BCC909)
    h = 0xCBF29CE484222325  # FNV-1a over the utf-8 bytes
    for b in str(label).encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK
    return h


class Rng:
    """One deterministic stream; ``split`` derives independent child streams."""

    __slots__ = ("_key", "_ctr", "_gauss")

    def __init__(self, seed):
        self._key = _fin(int(seed) & _MASK)
        self._ctr = 0
        self._gauss = None

    def split(self, label):
        """Child stream keyed by label; independent of draws made here."""
        return Rng(self._key ^ _label_hash(label))

    def u64(self):
        self._ctr += 1
        return _fin(self._key ^ _fin(self._ctr * _GOLDEN))

    def uniform(self, lo=0.0, hi=1.0):
        return lo + (hi - lo) * ((self.u64() >> 11) * 2.0 ** -53)

    def normal(self, mu=0.0, sigma=1.0):
        if self._gauss is not None:
            z = self._gauss
            self._gauss = None
            return mu + sigma * z
        # Box-Muller; u1 in (0, 1] so the log is finite
        u1 = ((self.u64() >> 11) + 1) * 2.0 ** -53
        u2 = (self.u64() >> 11) * 2.0 ** -53
        r = sqrt(-2.0 * log(u1))
        self._gauss = r * sin(2.0 * pi * u2)
        return mu + sigma * r * cos(2.0 * pi * u2)

    def randint(self, n):
        """Unbiased draw from [0, n)."""
        if n <= 0:
            raise ValueError(f"randint: n must be positive, got {n}")
        limit = ((1 << 64) // n) * n
        while True:
            v = self.u64()
            if v < limit:
                return v % n

    def shuffle(self, items):
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n):
        out = list(range(n))
        self.shuffle(out)
        return out

    def fill_normal(self, buf, mu=0.0, sigma=1.0):
        for i in range(len(buf)):
            buf[i] = self.normal(mu, sigma)
