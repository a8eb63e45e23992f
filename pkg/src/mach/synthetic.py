"""Synthetic benchmark data: Gaussian clusters, one per class."""
from __future__ import annotations

import numpy as np

from .core import LabeledSample, SparseVector


def gaussian_clusters(num_classes, dim, per_class, noise=1.0, seed=0, test_per_class=0):
    """Dense Gaussian blobs around unit-variance random centres.

    Returns ``(train, test)`` lists of LabeledSample; the same ``seed``
    always yields the same split.
    """
    rng = np.random.default_rng(seed)
    centres = rng.standard_normal((num_classes, dim))

    def draw(n):
        labels = np.repeat(np.arange(num_classes), n)
        points = centres[labels] + noise * rng.standard_normal((labels.size, dim))
        order = rng.permutation(labels.size)
        return [LabeledSample(SparseVector.from_dense(points[i]), frozenset([int(labels[i])]))
                for i in order]

    return draw(per_class), draw(test_per_class)
