"""Active contrastive losses and the combined training objective.

All losses operate on a stacked matrix of 2N rows laid out as
[x_1^a .. x_N^a, x_1^b .. x_N^b]: the two augmented views of the batch.
Similarity is cosine, kernelized as s(u, v) = exp(cos(u, v) / tau).

For anchor row u of sample i, the per-anchor ratio is

    l_u = ( s(u, partner(u)) + sum_j C[i, j] * (s(u, j_a) + s(u, j_b)) )
          / ( (N + sum_j C[i, j]) * sum over all 2N rows v of s(u, v) )

where C is the symmetric query matrix holding lambda for oracle-confirmed
same-cluster pairs and 0 elsewhere. The denominator's kernel sum runs over
every row including u itself. The batch loss is the mean of -log l_u over
all 2N anchors. With C = 0 this is exactly the plain two-view contrastive
loss with an all-samples denominator.

The cluster-level loss applies the same machinery to the transposed
assignment matrix: each cluster's probability column (per view) acts as a
sample, positive pairs are the same cluster across the two views, and no
query matrix is involved.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateInputError, InputError


def cosine_similarity(u, v):
    """Cosine of the angle between two nonzero vectors, in [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise InputError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateInputError("cosine similarity undefined for zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def pair_kernel(u, v, tau):
    """exp(cos(u, v) / tau), the positive pair kernel."""
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    return float(np.exp(cosine_similarity(u, v) / tau))


@dataclass
class QueryMatrix:
    """Per-batch N x N matrix with lambda at oracle-confirmed same-cluster
    pairs and 0 elsewhere. Symmetric with zero diagonal."""

    values: np.ndarray
    lam: float

    def __post_init__(self):
        c = np.asarray(self.values, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise InputError(f"query matrix must be square, got {c.shape}")
        if self.lam < 0:
            raise InputError(f"lambda must be >= 0, got {self.lam}")
        if np.any(np.diag(c) != 0.0):
            raise InputError("query matrix diagonal must be zero")
        if not np.array_equal(c, c.T):
            raise InputError("query matrix must be symmetric")
        nonzero = c[c != 0.0]
        if nonzero.size and not np.all(nonzero == self.lam):
            raise InputError("every nonzero query matrix entry must equal lambda")
        self.values = c

    @property
    def n(self):
        return self.values.shape[0]

    @classmethod
    def zeros(cls, n, lam=0.0):
        return cls(values=np.zeros((n, n)), lam=lam)


def _as_query_array(c, n):
    c = c.values if isinstance(c, QueryMatrix) else np.asarray(c, dtype=np.float64)
    if c.shape != (n, n):
        raise InputError(f"query matrix shape {c.shape} does not match batch size {n}")
    if not np.array_equal(c, c.T):
        raise InputError("query matrix must be symmetric")
    if np.any(np.diag(c) != 0.0):
        raise InputError("query matrix diagonal must be zero")
    return c


def _normalize_rows(e):
    norms = np.linalg.norm(e, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError("embedding row with zero norm")
    return e / norms[:, None], norms


def _loss_pieces(e, c, tau):
    """Shared forward computation: kernel matrix, positive weights, sums."""
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] % 2 != 0:
        raise InputError(f"embedding matrix must have an even row count, got {e.shape}")
    n = e.shape[0] // 2
    if n < 2:
        raise InputError("need at least 2 samples per view")
    if tau <= 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    c = _as_query_array(c, n)

    en, norms = _normalize_rows(e)
    g = en @ en.T
    s = np.exp(g / tau)

    eye = np.eye(n)
    w = np.block([[c, c + eye], [c + eye, c]])  # positive-pair weights per anchor
    numer = (w * s).sum(axis=1)
    rowsum = s.sum(axis=1)  # all samples, self included
    norm_c = n + c.sum(axis=1)
    norm_c2 = np.concatenate([norm_c, norm_c])
    return e, c, n, en, norms, s, w, numer, rowsum, norm_c2


def active_instance_loss(e, c, tau):
    """Mean -log ratio over all 2N anchors; see the module docstring."""
    *_, numer, rowsum, norm_c2 = _loss_pieces(e, c, tau)
    return float(np.mean(np.log(norm_c2) + np.log(rowsum) - np.log(numer)))


def active_instance_loss_grad(e, c, tau):
    """Loss and its exact gradient w.r.t. the embedding matrix."""
    e, c, n, en, norms, s, w, numer, rowsum, norm_c2 = _loss_pieces(e, c, tau)
    loss = float(np.mean(np.log(norm_c2) + np.log(rowsum) - np.log(numer)))

    d_s = (1.0 / rowsum[:, None] - w / numer[:, None]) / (2.0 * n)
    d_g = d_s * s / tau
    d_en = (d_g + d_g.T) @ en
    # through row normalization: project out the radial component
    d_e = (d_en - (d_en * en).sum(axis=1, keepdims=True) * en) / norms[:, None]
    return loss, d_e


def cluster_columns(yhat):
    """Stack the two views' cluster columns as a (2K, N) embedding matrix."""
    yhat = np.asarray(yhat, dtype=np.float64)
    if yhat.ndim != 2 or yhat.shape[0] % 2 != 0:
        raise InputError(f"assignment matrix must have an even row count, got {yhat.shape}")
    n = yhat.shape[0] // 2
    return np.vstack([yhat[:n].T, yhat[n:].T])


def cluster_level_loss(yhat, tau):
    """Contrastive loss over clusters on the assignment space."""
    k = np.asarray(yhat).shape[1]
    if k < 2:
        raise ConfigError(f"cluster-level loss needs K >= 2, got {k}")
    return active_instance_loss(cluster_columns(yhat), np.zeros((k, k)), tau)


def cluster_level_loss_grad(yhat, tau):
    k = np.asarray(yhat).shape[1]
    if k < 2:
        raise ConfigError(f"cluster-level loss needs K >= 2, got {k}")
    cols = cluster_columns(yhat)
    loss, d_cols = active_instance_loss_grad(cols, np.zeros((k, k)), tau)
    n = np.asarray(yhat).shape[0] // 2
    d_yhat = np.empty_like(np.asarray(yhat, dtype=np.float64))
    d_yhat[:n] = d_cols[:k].T
    d_yhat[n:] = d_cols[k:].T
    return loss, d_yhat


def balance_regularizer(yhat):
    """Shannon entropy (nats) of the empirical cluster marginal.

    The total objective subtracts this value, so minimizing the objective
    pushes the marginal toward uniform, i.e. balanced cluster sizes.
    """
    yhat = np.asarray(yhat, dtype=np.float64)
    if np.any(yhat < 0):
        raise InputError("assignment matrix must be nonnegative")
    total = yhat.sum()
    if total <= 0:
        raise DegenerateInputError("assignment matrix has zero mass")
    p = yhat.sum(axis=0) / total
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def balance_regularizer_grad(yhat):
    """Entropy H and the gradient of (-H) w.r.t. the assignment matrix."""
    yhat = np.asarray(yhat, dtype=np.float64)
    total = yhat.sum()
    if total <= 0:
        raise DegenerateInputError("assignment matrix has zero mass")
    p = yhat.sum(axis=0) / total
    h = float(-(p[p > 0] * np.log(p[p > 0])).sum())
    # d(-H)/dY[u, k] = (log p_k + H) / total, constant along rows
    row = (np.log(np.maximum(p, 1e-300)) + h) / total
    return h, np.broadcast_to(row, yhat.shape).copy()


@dataclass
class LossBreakdown:
    rep_loss: float
    assign_loss: float
    cluster_loss: float
    balance: float  # entropy of the cluster marginal, >= 0
    total: float    # rep + assign + cluster - balance

    def as_dict(self):
        return {
            "rep_loss": self.rep_loss,
            "assign_loss": self.assign_loss,
            "cluster_loss": self.cluster_loss,
            "balance": self.balance,
            "total": self.total,
        }


def total_loss(zhat, yhat, c, tau_instance, tau_cluster,
               use_rep=True, use_assign=True):
    """Combined objective: instance contrast in representation and
    assignment space, cluster-level contrast, minus the balance entropy.

    use_rep / use_assign zero out the corresponding instance term (for the
    contrastive-space ablations); the excluded term is reported as 0.
    """
    rep = active_instance_loss(zhat, c, tau_instance) if use_rep else 0.0
    assign = active_instance_loss(yhat, c, tau_instance) if use_assign else 0.0
    cluster = cluster_level_loss(yhat, tau_cluster)
    balance = balance_regularizer(yhat)
    return LossBreakdown(
        rep_loss=rep,
        assign_loss=assign,
        cluster_loss=cluster,
        balance=balance,
        total=rep + assign + cluster - balance,
    )


def total_loss_grad(zhat, yhat, c, tau_instance, tau_cluster,
                    use_rep=True, use_assign=True):
    """Breakdown plus exact gradients w.r.t. zhat and yhat."""
    zhat = np.asarray(zhat, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    d_zhat = np.zeros_like(zhat)
    d_yhat = np.zeros_like(yhat)

    rep = 0.0
    if use_rep:
        rep, d_zhat = active_instance_loss_grad(zhat, c, tau_instance)
    assign = 0.0
    if use_assign:
        assign, d_y = active_instance_loss_grad(yhat, c, tau_instance)
        d_yhat += d_y
    cluster, d_y = cluster_level_loss_grad(yhat, tau_cluster)
    d_yhat += d_y
    balance, d_y = balance_regularizer_grad(yhat)
    d_yhat += d_y

    breakdown = LossBreakdown(
        rep_loss=rep,
        assign_loss=assign,
        cluster_loss=cluster,
        balance=balance,
        total=rep + assign + cluster - balance,
    )
    return breakdown, d_zhat, d_yhat
