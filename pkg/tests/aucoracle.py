"""O(P*N) pairwise AUC: wins plus half ties over all positive/negative pairs."""

from __future__ import annotations

import numpy as np


def pairwise_auc(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos, neg = scores[labels == 1], scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        return None
    diff = pos[:, None] - neg[None, :]
    wins = int((diff > 0).sum())
    ties = int((diff == 0).sum())
    return (wins + 0.5 * ties) / (pos.size * neg.size)


def tied_instance(rng: np.random.Generator):
    """Random scores drawn from a small value pool so at least 30% of them are tied."""
    while True:
        n = int(rng.integers(4, 80))
        pool = rng.standard_normal(int(rng.integers(1, max(2, n // 3) + 1)))
        scores = rng.choice(pool, n)
        labels = (rng.random(n) < rng.uniform(0.1, 0.9)).astype(int)
        _, counts = np.unique(scores, return_counts=True)
        tied = counts[counts > 1].sum() / n
        if tied >= 0.3 and 0 < labels.sum() < n:
            return scores, labels, tied
