"""Importance-weighted training-edge selection.

Each training edge carries a score sigmoid(logit) + gamma, refreshed from
the model's positive-edge logits after every forward pass.  Batches are
drawn proportionally to the scores, without replacement inside a batch;
gamma mixes in a uniform floor so no edge ever starves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class IndexError_(IndexError):
    """Edge id outside the training range."""


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


@dataclass
class ImportanceScores:
    scores: np.ndarray
    gamma: float
    base_eid: int = 0  # eid of the first training edge

    @property
    def num_edges(self):
        return self.scores.shape[0]


def init_scores(num_train_edges, gamma=0.1, base_eid=0):
    """Uniform start at sigmoid(0) + gamma."""
    if num_train_edges < 1:
        raise ValueError("need at least one training edge")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    return ImportanceScores(np.full(num_train_edges, 0.5 + gamma), float(gamma),
                            int(base_eid))


def select_batch(scores, b, rng):
    """b distinct training eids, probability proportional to the scores."""
    if b > scores.num_edges:
        raise ValueError(f"batch size {b} exceeds {scores.num_edges} training edges")
    p = scores.scores / scores.scores.sum()
    idx = rng.choice(scores.num_edges, size=b, replace=False, p=p)
    return np.sort(idx) + scores.base_eid


def update_scores(scores, batch_eids, logits):
    """Overwrite scores of positive batch edges with sigmoid(logit) + gamma."""
    idx = np.asarray(batch_eids, dtype=np.int64) - scores.base_eid
    if idx.size and (idx.min() < 0 or idx.max() >= scores.num_edges):
        raise IndexError_("eid outside the training range")
    scores.scores[idx] = _sigmoid(logits) + scores.gamma
