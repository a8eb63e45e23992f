"""2-universal hashing of class ids and feature hashing of sparse inputs.

Class ids are bucketed with the Carter-Wegman family

    h(x) = ((a*x + b) mod p) mod B,   1 <= a < p,  0 <= b < p

which gives Pr[h(i) = z1 and h(j) = z2] ~= 1/B^2 for i != j. The deviation
from exact 2-universality is O(B/p), so callers that care about the
collision rate (the MACH decoder does) should ask for a large prime via
``min_prime``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.utils import murmurhash3_32
from sympy import isprime, nextprime

from .errors import ConfigError

# Mersenne prime 2^31 - 1. a*x + b stays below 2^63 for x < p, so the
# vectorised path never overflows int64.
LARGE_PRIME = 2**31 - 1


def smallest_prime_at_least(n: int) -> int:
    n = max(int(n), 2)
    return n if isprime(n) else int(nextprime(n))


@dataclass(frozen=True)
class UniversalHash:
    """One member (a, b, p, B) of the Carter-Wegman family."""

    a: int
    b: int
    p: int
    range_b: int

    def __post_init__(self):
        if self.range_b < 1:
            raise ConfigError(f"range_b must be positive, got {self.range_b}")
        if self.p < self.range_b or not isprime(self.p):
            raise ConfigError(f"p={self.p} must be a prime >= range_b={self.range_b}")
        if not 1 <= self.a < self.p:
            raise ConfigError(f"a={self.a} outside [1, p)")
        if not 0 <= self.b < self.p:
            raise ConfigError(f"b={self.b} outside [0, p)")

    def __call__(self, x):
        return eval_hash(self, x)

    def table(self, domain_size: int) -> np.ndarray:
        """Buckets of every id in ``range(domain_size)`` as an int64 array."""
        return eval_hash(self, np.arange(domain_size, dtype=np.int64))


def sample_hash(seed, range_b: int, domain_size: int, min_prime: int = 0) -> UniversalHash:
    """Draw a hash from the family, deterministically in ``seed``.

    ``p`` is the smallest prime >= max(range_b, domain_size, min_prime).
    ``seed`` is anything ``numpy.random.default_rng`` accepts.
    """
    if range_b < 2:
        raise ConfigError(f"range_b must be >= 2, got {range_b}")
    if domain_size < 1:
        raise ConfigError(f"domain_size must be >= 1, got {domain_size}")
    p = smallest_prime_at_least(max(range_b, domain_size, min_prime))
    rng = np.random.default_rng(seed)
    a = int(rng.integers(1, p))
    b = int(rng.integers(0, p))
    return UniversalHash(a, b, p, range_b)


def eval_hash(h: UniversalHash, x):
    """((a*x + b) mod p) mod B for a scalar id or an integer array of ids."""
    if isinstance(x, (int, np.integer)):
        return ((h.a * int(x) + h.b) % h.p) % h.range_b
    x = np.asarray(x)
    if h.p <= LARGE_PRIME + 1 and (x.size == 0 or int(x.max()) < h.p):
        return ((h.a * x.astype(np.int64) + h.b) % h.p) % h.range_b
    # big primes would overflow int64; fall back to Python integers
    out = [((h.a * int(v) + h.b) % h.p) % h.range_b for v in x.ravel()]
    return np.array(out, dtype=np.int64).reshape(x.shape)


def feature_hash(x, target_dim: int, seed: int = 0):
    """Map a SparseVector into ``target_dim`` dimensions with seeded murmurhash3.

    Colliding values are summed; entries whose sum is exactly zero are
    dropped so the result stays canonical.
    """
    from .core import SparseVector

    if target_dim < 1:
        raise ConfigError(f"target_dim must be >= 1, got {target_dim}")
    if x.nnz == 0:
        return SparseVector(target_dim, x.indices[:0], x.values[:0])
    keys = murmurhash3_32(x.indices.astype(np.int32), seed=int(seed), positive=True)
    mapped = np.asarray(keys, dtype=np.int64) % target_dim
    idx, inverse = np.unique(mapped, return_inverse=True)
    vals = np.zeros(idx.size)
    np.add.at(vals, inverse, x.values)
    keep = vals != 0.0
    return SparseVector(target_dim, idx[keep], vals[keep])
