"""Ranking metrics: AUROC (rank statistic, ties count 1/2) and average precision."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class SingleClass(ValueError):
    pass


class NoPositives(ValueError):
    pass


def auroc(scores, labels) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUROC needs both positive and negative labels")
    ranks = rankdata(scores, method="average")
    r_pos = ranks[labels].sum()
    return float((r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Mean precision at each positive's rank; equal scores keep input order."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if not labels.any():
        raise NoPositives("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, len(ranks) + 1) / ranks
    return float(precision.mean())
