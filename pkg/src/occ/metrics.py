"""Clustering agreement metrics: NMI, ARI and matched accuracy.

All three are invariant under relabeling of the predicted clusters. NMI is
normalized by the arithmetic mean of the two label entropies; accuracy uses
the optimal injective cluster-to-label matching on the contingency table.
"""

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError


def _check(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.ndim != 1 or truth.ndim != 1 or len(pred) != len(truth):
        raise InputError(f"label vectors must be 1-d and equal length, got {pred.shape} vs {truth.shape}")
    if len(pred) == 0:
        raise InputError("label vectors must be nonempty")
    return pred, truth


def contingency(pred, truth):
    """Counts[i, j] = number of samples with pred label i and true label j."""
    pred, truth = _check(pred, truth)
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((pi.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth):
    """Mutual information over the arithmetic mean of entropies.

    Returns 0 when either partition is constant (zero entropy convention).
    """
    table = contingency(pred, truth).astype(np.float64)
    n = table.sum()
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    h_pred = _entropy(a)
    h_truth = _entropy(b)
    if h_pred == 0.0 or h_truth == 0.0:
        return 0.0
    nz = table > 0
    mi = float((table[nz] / n * np.log(n * table[nz] / np.outer(a, b)[nz])).sum())
    mi = max(mi, 0.0)
    return min(mi / ((h_pred + h_truth) / 2.0), 1.0)


def _comb2(x):
    return x * (x - 1) / 2.0


def ari(pred, truth):
    """Adjusted Rand index over the contingency table, in [-1, 1]."""
    table = contingency(pred, truth).astype(np.float64)
    n = table.sum()
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / _comb2(n) if n >= 2 else 0.0
    maximum = (sum_a + sum_b) / 2.0
    if maximum == expected:
        return 1.0  # degenerate cases, e.g. a single element
    return float((sum_ij - expected) / (maximum - expected))


def acc(pred, truth):
    """Best fraction of agreement over injective cluster-to-label matchings."""
    table = contingency(pred, truth)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / table.sum())
