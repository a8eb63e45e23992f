"""Count-min sketch over integer item ids.

The same R x B structure MACH decodes: each row hashes items with its own
2-universal function, updates add one to the item's cell in every row, and a
query returns the smallest of the item's R cells, which never undercounts.
"""
from __future__ import annotations

import numpy as np
from sklearn.utils import murmurhash3_32

from .errors import ConfigError, ValidationError
from .hashing import LARGE_PRIME, UniversalHash, sample_hash

# token ids produced by token_id() live in [0, 2^32)
TOKEN_DOMAIN = 2**32


def token_id(token: str) -> int:
    return int(murmurhash3_32(token, seed=0, positive=True))


class CountMinSketch:
    """R x B int64 counters plus their row hashes. Callers serialize updates."""

    def __init__(self, hashes, domain_size: int):
        hashes = list(hashes)
        if not hashes:
            raise ConfigError("need at least one row")
        b = hashes[0].range_b
        if b < 2 or any(h.range_b != b for h in hashes):
            raise ConfigError("all rows must share a bucket count >= 2")
        self.hashes: list[UniversalHash] = hashes
        self.domain_size = int(domain_size)
        self.counts = np.zeros((len(hashes), b), dtype=np.int64)
        self.total = 0

    @classmethod
    def new(cls, b: int, r: int, seed: int, domain_size: int) -> "CountMinSketch":
        if b < 2 or r < 1:
            raise ConfigError(f"need b >= 2 and r >= 1, got b={b}, r={r}")
        if domain_size < 1:
            raise ConfigError("domain_size must be positive")
        hashes = [
            sample_hash(np.random.SeedSequence(seed, spawn_key=(j,)), b, domain_size,
                        min_prime=LARGE_PRIME)
            for j in range(r)
        ]
        return cls(hashes, domain_size)

    @property
    def width(self) -> int:
        return self.counts.shape[1]

    @property
    def depth(self) -> int:
        return self.counts.shape[0]

    def _check(self, item):
        if not 0 <= item < self.domain_size:
            raise ValidationError(f"item {item} outside domain [0, {self.domain_size})")

    def cells(self, item: int) -> list[int]:
        self._check(item)
        return [h(item) for h in self.hashes]

    def update(self, item: int) -> "CountMinSketch":
        for j, c in enumerate(self.cells(item)):
            self.counts[j, c] += 1
        self.total += 1
        return self

    def update_many(self, items) -> "CountMinSketch":
        """Add every item of an integer array, equivalent to repeated update()."""
        items = np.asarray(items, dtype=np.int64)
        if items.size and (items.min() < 0 or items.max() >= self.domain_size):
            raise ValidationError(f"items outside domain [0, {self.domain_size})")
        for j, h in enumerate(self.hashes):
            self.counts[j] += np.bincount(h(items), minlength=self.width)
        self.total += int(items.size)
        return self

    def estimate(self, item: int) -> int:
        return int(min(self.counts[j, c] for j, c in enumerate(self.cells(item))))

    def estimate_many(self, items) -> np.ndarray:
        items = np.asarray(items, dtype=np.int64)
        if items.size and (items.min() < 0 or items.max() >= self.domain_size):
            raise ValidationError(f"items outside domain [0, {self.domain_size})")
        rows = [self.counts[j, h(items)] for j, h in enumerate(self.hashes)]
        return np.min(rows, axis=0)

    def heavy_hitters(self, candidates, k: int) -> list[tuple[int, int]]:
        """Top-k (item, estimate) among ``candidates``, ties to the lower id."""
        cand = np.unique(np.asarray(list(candidates), dtype=np.int64))
        est = self.estimate_many(cand)
        order = np.lexsort((cand, -est))[:k]
        return [(int(cand[i]), int(est[i])) for i in order]


def cms_new(b: int, r: int, seed: int, domain_size: int) -> CountMinSketch:
    return CountMinSketch.new(b, r, seed, domain_size)


def cms_update(s: CountMinSketch, item: int) -> CountMinSketch:
    return s.update(item)


def cms_estimate(s: CountMinSketch, item: int) -> int:
    return s.estimate(item)
