"""Clustering-risk decomposition and its importance-sampling bound.

The expected clustering risk of a similarity-based clusterer over the
population of same-cluster pairs splits into three pieces:

  A  excess risk: |population risk - mean risk over the target pairs|
  B  extended risk: the importance-weighted mean (1/|T|) sum Q_z/p_z l_z
     over the randomly queried pairs, Q_z ~ Bernoulli(p_z)
  C  active risk: |mean target risk - B|

Term C concentrates: with probability at least 1 - delta it stays below

  (D_p / (3 |T|)) log(1/delta) (1 + sqrt(1 + 18 / log(1/delta)))

with D_p = sum l_z / p_z, which is minimized by querying with probability
proportional to sqrt(l_z). Per-pair losses are 1 - cosine similarity,
clamped to [0, 1] so the bounded-variance algebra behind the bound holds.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateInputError, InputError
from .losses import cosine_similarity
from .query import d_p


def pair_loss(u, v):
    """1 - cos(u, v), clamped to [0, 1]."""
    return float(np.clip(1.0 - cosine_similarity(u, v), 0.0, 1.0))


@dataclass
class RiskPopulation:
    """Target same-cluster pairs: per-pair losses, query probabilities,
    and the full-population expected risk they were drawn from."""

    losses: np.ndarray
    probs: np.ndarray
    expected_risk: float

    def __post_init__(self):
        l = np.asarray(self.losses, dtype=np.float64)
        p = np.asarray(self.probs, dtype=np.float64)
        if l.ndim != 1 or l.shape != p.shape or l.size == 0:
            raise InputError("losses and probs must be nonempty 1-d arrays of equal length")
        if np.any(l < 0) or np.any(l > 1):
            raise InputError("per-pair losses must lie in [0, 1]")
        if np.any(p <= 0) or np.any(p > 1):
            raise InputError("query probabilities must lie in (0, 1]")
        self.losses = l
        self.probs = p


def risk_decomposition(population, q):
    """Terms (A, B, C) for one realized query indicator vector q."""
    q = np.asarray(q, dtype=np.float64)
    l = population.losses
    p = population.probs
    if q.shape != l.shape:
        raise InputError("query indicators must match the target pairs")
    if not np.all((q == 0) | (q == 1)):
        raise InputError("query indicators must be 0/1")
    mean_target = float(l.mean())
    a = abs(population.expected_risk - mean_target)
    b = float((q / p * l).mean())
    c = abs(mean_target - b)
    return a, b, c


def bernstein_bound(losses, p, delta):
    """High-probability bound on the active risk term C."""
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must be in (0, 1), got {delta}")
    l = np.asarray(losses, dtype=np.float64)
    dp = d_p(l, p)
    ld = np.log(1.0 / delta)
    return float(dp / (3.0 * l.size) * ld * (1.0 + np.sqrt(1.0 + 18.0 / ld)))


def monte_carlo_deviations(losses, p, trials, rng=None):
    """|mean target risk - importance-weighted risk| for i.i.d. query draws."""
    if trials < 1:
        raise InputError("trials must be >= 1")
    l = np.asarray(losses, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if l.shape != p.shape:
        raise InputError("losses and probabilities must match")
    if np.any(p <= 0):
        raise DegenerateInputError("query probabilities must be strictly positive")
    if rng is None:
        rng = np.random.default_rng(0)
    q = rng.random((trials, l.size)) < p
    weighted = (q * (l / p)).mean(axis=1)
    return np.abs(l.mean() - weighted)


def monte_carlo_coverage(losses, p, delta, trials, rng=None):
    """Fraction of query draws whose deviation stays within the bound."""
    if trials < 1000:
        raise InputError(f"need at least 1000 trials for a stable estimate, got {trials}")
    bound = bernstein_bound(losses, p, delta)
    deviations = monte_carlo_deviations(losses, p, trials, rng=rng)
    return float((deviations <= bound).mean())
