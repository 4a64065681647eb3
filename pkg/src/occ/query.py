"""Pair-selection strategies for active same-cluster queries.

The cyclic similarity discrepancy (CSD) score of a pair is
s_now * |s_now - s_prev|: prefer pairs that look similar right now and
whose similarity moved the most since the last time they were scored.
Baselines: uniform random pairs, and a max-entropy anchor paired with the
sample whose similarity to it is nearest the median.

Pair similarity is computed on the backbone features of the current batch
(two stacked views): the mean of the two within-view cosine similarities.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateInputError, InputError

STRATEGIES = ("csd", "random", "entropy")


def ordered_pair(i, j):
    if i == j:
        raise InputError(f"self pair ({i}, {i}) is not a valid query")
    return (i, j) if i < j else (j, i)


class PairSimilarityHistory:
    """Last observed similarity per unordered sample-id pair."""

    def __init__(self):
        self._sims = {}

    def get(self, pair, default=None):
        rec = self._sims.get(ordered_pair(*pair))
        return default if rec is None else rec[0]

    def update(self, pair, sim, iteration):
        if not -1.0 <= sim <= 1.0 + 1e-12:
            raise InputError(f"similarity {sim} outside [-1, 1]")
        self._sims[ordered_pair(*pair)] = (float(sim), int(iteration))

    def __len__(self):
        return len(self._sims)

    def __contains__(self, pair):
        return ordered_pair(*pair) in self._sims


@dataclass
class QueryBudget:
    """Total query allowance plus the per-batch quota."""

    total: int
    per_batch: int
    spent: int = 0

    @property
    def remaining(self):
        return max(0, self.total - self.spent)

    def charge(self, n=1):
        if self.spent + n > self.total:
            raise InputError("query budget exceeded")
        self.spent += n


def csd_score(s_now, s_prev):
    """Cyclic similarity discrepancy of one pair, clamped at zero."""
    for s in (s_now, s_prev):
        if not -1.0 - 1e-12 <= s <= 1.0 + 1e-12:
            raise InputError(f"similarity {s} outside [-1, 1]")
    return max(0.0, s_now * abs(s_now - s_prev))


def batch_pair_similarities(z):
    """Pairwise similarity matrix over the N original samples of a stacked
    2N-row feature batch: mean of the two within-view cosine matrices."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] % 2 != 0:
        raise InputError(f"stacked feature matrix must have an even row count, got {z.shape}")
    n = z.shape[0] // 2
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError("feature row with zero norm")
    zn = z / norms[:, None]
    ga = zn[:n] @ zn[:n].T
    gb = zn[n:] @ zn[n:].T
    return np.clip(0.5 * (ga + gb), -1.0, 1.0)


def _candidate_pairs(ids, store):
    """In-batch pairs not yet answered, as (pos_p, pos_q, (id_i, id_j))."""
    n = len(ids)
    answered = store.answer_keys() if store is not None else frozenset()
    cands = []
    for p in range(n):
        ip = ids[p]
        for q in range(p + 1, n):
            iq = ids[q]
            if ip == iq:
                continue
            pair = (ip, iq) if ip < iq else (iq, ip)
            if pair in answered:
                continue
            cands.append((p, q, pair))
    return cands


def select_pairs(z, ids, history, store, budget, strategy, rng,
                 iteration=0, yhat=None, scores_out=None):
    """Select up to the per-batch quota of unanswered sample-id pairs.

    z holds the 2N stacked backbone features of the batch whose first-half
    row p corresponds to sample ids[p]. An exhausted budget yields an empty
    selection (a signal, not an error). For the csd strategy every scored
    candidate's history entry is refreshed with its current similarity.
    When scores_out is a dict it receives pair -> score for the selection
    (csd score, or anchor entropy for the entropy baseline).
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if len(ids) < 2:
        raise InputError("batch must contain at least 2 samples")
    quota = min(budget.per_batch, budget.remaining)
    if quota <= 0:
        return []
    cands = _candidate_pairs(ids, store)
    if not cands:
        return []

    if strategy == "random":
        take = min(quota, len(cands))
        chosen = rng.choice(len(cands), size=take, replace=False)
        return sorted(cands[k][2] for k in chosen)

    if strategy == "entropy":
        if yhat is None:
            raise InputError("entropy strategy needs the batch assignment matrix")
        return entropy_baseline_select(yhat, z, ids, store, quota, rng,
                                       scores_out=scores_out)

    sims = batch_pair_similarities(z)
    hist = history._sims
    scored = []
    for p, q, pair in cands:
        s_now = float(sims[p, q])
        rec = hist.get(pair)
        s_prev = rec[0] if rec is not None else 0.0
        score = s_now * abs(s_now - s_prev)
        scored.append((score if score > 0.0 else 0.0, pair))
        hist[pair] = (s_now, iteration)
    scored.sort(key=lambda t: (-t[0], t[1]))
    top = scored[:quota]
    if scores_out is not None:
        scores_out.update({pair: score for score, pair in top})
    return [pair for _, pair in top]


def entropy_baseline_select(yhat, z, ids, store, quota, rng, scores_out=None):
    """Anchor on the unannotated sample with the most uncertain assignment,
    partner it with the sample whose similarity is nearest the median.

    When every batch sample already appears in some answered pair, anchors
    fall back to annotated samples (still only proposing unanswered pairs),
    so the baseline keeps querying instead of starving mid-run.
    """
    if quota <= 0:
        return []
    yhat = np.asarray(yhat, dtype=np.float64)
    n = len(ids)
    if yhat.shape[0] != 2 * n:
        raise InputError(f"assignment matrix rows {yhat.shape[0]} != 2 * batch size {n}")
    mean_rows = 0.5 * (yhat[:n] + yhat[n:])
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(mean_rows > 0, np.log(mean_rows), 0.0)
    entropies = -(mean_rows * logp).sum(axis=1)
    sims = batch_pair_similarities(z)

    annotated = store.samples() if store is not None else set()
    answered = store.answer_keys() if store is not None else frozenset()
    anchor_order = sorted(range(n), key=lambda p: (ids[p] in annotated,
                                                   -entropies[p], ids[p]))
    selected = []
    taken = set()
    for p in anchor_order:
        if len(selected) >= quota:
            break
        partners = []
        for q in range(n):
            if q == p or ids[q] == ids[p]:
                continue
            pair = ordered_pair(ids[p], ids[q])
            if pair in taken or pair in answered:
                continue
            partners.append((q, float(sims[p, q])))
        if not partners:
            continue
        median = float(np.median([s for _, s in partners]))
        q = min(partners, key=lambda t: (abs(t[1] - median), ids[t[0]]))[0]
        pair = ordered_pair(ids[p], ids[q])
        selected.append(pair)
        taken.add(pair)
        if scores_out is not None:
            scores_out[pair] = float(entropies[p])
    return selected


def optimal_sampling_distribution(losses):
    """Query probabilities proportional to the square root of each loss,
    the minimizer of the importance-weighted sum below."""
    l = np.asarray(losses, dtype=np.float64)
    if l.ndim != 1 or l.size == 0:
        raise InputError("losses must be a nonempty 1-d array")
    if np.any(l < 0):
        raise InputError("losses must be >= 0")
    roots = np.sqrt(l)
    total = roots.sum()
    if total == 0.0:
        raise DegenerateInputError("all losses are zero; sampling distribution undefined")
    return roots / total


def d_p(losses, p):
    """sum_z l_z / p_z, the quantity controlling the active-risk bound.

    Zero-loss entries contribute nothing regardless of their probability;
    a zero probability on a positive loss is degenerate.
    """
    l = np.asarray(losses, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if l.shape != p.shape:
        raise InputError(f"losses and probabilities must match, got {l.shape} vs {p.shape}")
    if np.any(l < 0):
        raise InputError("losses must be >= 0")
    if np.any(p < 0) or np.any(p > 1.0 + 1e-12):
        raise InputError("probabilities must lie in [0, 1]")
    support = l > 0
    if np.any(p[support] == 0.0):
        raise DegenerateInputError("zero query probability on a positive-loss pair")
    return float((l[support] / p[support]).sum())
