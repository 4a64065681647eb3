"""End-to-end training loop with active same-cluster queries.

Per mini-batch: augment two views, run the network, select pairs to query
(budget permitting), record the oracle's answers, build the query matrix,
evaluate the combined contrastive objective, and take one Adam step. After
the gate epoch, label extension clones annotated samples' pair relations to
embeddings that are almost identical to theirs. Everything is driven by a
single seeded generator, so a run is a pure function of (dataset, config).
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .augment import AugmentConfig, augment_batch
from .errors import ConfigError, InputError, TrainingDiverged
from .losses import total_loss_grad
from .metrics import acc, ari, nmi
from .nn import adam_init, adam_step, backward, forward, init_params
from .oracle import (AnnotationStore, LambdaSchedule, build_query_matrix,
                     extend_labels, lambda_at, simulated_answer)
from .query import PairSimilarityHistory, QueryBudget, select_pairs


@dataclass
class TrainConfig:
    n_clusters: int = 2
    epochs: int = 150
    batch_size: int = 64
    hidden_dims: tuple = (64, 64)
    rep_dim: int = 32
    tau_instance: float = 0.5
    tau_cluster: float = 1.0
    learning_rate: float = 3e-3
    strategy: str = "csd"          # csd | random | entropy | none
    budget_fraction: float = 0.25
    queries_per_batch: int = 2
    lambda_max: float = 50.0
    label_extension: bool = True
    extend_threshold: float = 0.95
    extend_gate_fraction: float = 0.15
    extend_every: int = 2
    use_rep_space: bool = True
    use_assign_space: bool = True
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0

    def validate(self):
        if self.n_clusters < 2:
            raise ConfigError(f"n_clusters must be >= 2, got {self.n_clusters}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.budget_fraction <= 1.0:
            raise ConfigError(f"budget_fraction must be in [0, 1], got {self.budget_fraction}")
        if self.queries_per_batch < 0:
            raise ConfigError("queries_per_batch must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.tau_instance <= 0 or self.tau_cluster <= 0:
            raise ConfigError("temperatures must be > 0")
        if self.lambda_max <= 0:
            raise ConfigError("lambda_max must be > 0")
        if not 0.0 < self.extend_threshold < 1.0:
            raise ConfigError("extend_threshold must be in (0, 1)")
        if not 0.0 <= self.extend_gate_fraction <= 1.0:
            raise ConfigError("extend_gate_fraction must be in [0, 1]")
        if self.extend_every < 1:
            raise ConfigError("extend_every must be >= 1")
        if self.strategy not in ("csd", "random", "entropy", "none", None):
            raise ConfigError(f"unknown query strategy {self.strategy!r}")
        if self.rep_dim < 1 or not self.hidden_dims:
            raise ConfigError("model needs at least one hidden layer and rep_dim >= 1")
        self.augment.validate()
        return self

    def as_dict(self):
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d


@dataclass
class RunRecord:
    config: dict
    seed: int
    epochs: list
    query_log: list
    final_assignment: list
    final_metrics: dict
    queries_spent: int
    budget_total: int
    candidate_pairs_encountered: int
    excluded_spaces: list
    annotation_counts: dict

    def to_dict(self):
        return asdict(self)

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)

    def save_query_log(self, path):
        with open(path, "w") as f:
            for rec in self.query_log:
                f.write(json.dumps(rec) + "\n")


class SimulatedOracle:
    """Answers from a ground-truth orientation map."""

    def __init__(self, dataset, orientation):
        self.dataset = dataset
        self.orientation = orientation

    def answer(self, i, j, epoch=None):
        return simulated_answer((i, j), self.dataset, self.orientation)


def assign_clusters(params, features):
    """Row-argmax of the assignment head on un-augmented inputs; ties go to
    the lowest cluster index."""
    return np.argmax(forward(params, features).yhat, axis=1)


def evaluate(params, dataset):
    """NMI/ARI/ACC of the current assignment against both orientations."""
    pred = assign_clusters(params, dataset.features)
    out = {}
    for name, truth in (("A", dataset.orient_a), ("B", dataset.orient_b)):
        if truth is None or np.any(np.asarray(truth) < 0):
            continue
        out[name] = {"nmi": nmi(pred, truth), "ari": ari(pred, truth),
                     "acc": acc(pred, truth)}
    return out


def loss_and_param_grads(params, batch2n, cmat, cfg):
    """Forward, combined objective, and gradients for every parameter."""
    cache = forward(params, batch2n)
    breakdown, d_zhat, d_yhat = total_loss_grad(
        cache.zhat, cache.yhat, cmat, cfg.tau_instance, cfg.tau_cluster,
        use_rep=cfg.use_rep_space, use_assign=cfg.use_assign_space)
    grads = backward(params, cache, d_zhat, d_yhat)
    return breakdown, grads


def _mean_breakdown(rows):
    keys = ("rep_loss", "assign_loss", "cluster_loss", "balance", "total")
    return {k: float(np.mean([r[k] for r in rows])) for k in keys}


def _notify(observer, name, *args):
    if observer is not None:
        hook = getattr(observer, name, None)
        if hook is not None:
            hook(*args)


def train(dataset, oracle, cfg, store=None, observer=None):
    """Run the full loop and return (params, RunRecord).

    `oracle` answers .answer(i, j, epoch) with "same", "different", or None
    to skip (an interactive timeout); skipped queries are not charged to the
    budget. `store` may carry annotations from a previous run.
    """
    cfg.validate()
    n = len(dataset)
    if n == 0:
        raise InputError("dataset is empty")
    if cfg.batch_size > n:
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds dataset size {n}")

    x = np.asarray(dataset.features, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(rng, x.shape[1], cfg.hidden_dims, cfg.rep_dim, cfg.n_clusters)
    adam = adam_init(params)
    store = store if store is not None else AnnotationStore()
    history = PairSimilarityHistory()
    budget = QueryBudget(total=0, per_batch=cfg.queries_per_batch)
    schedule = LambdaSchedule(cfg.lambda_max, cfg.epochs)
    active = (cfg.strategy not in ("none", None)
              and cfg.budget_fraction > 0 and cfg.queries_per_batch > 0)
    gate_epoch = int(np.ceil(cfg.extend_gate_fraction * cfg.epochs))
    n_batches = n // cfg.batch_size

    encountered = set()  # distinct in-batch pairs, encoded i * n + j with i < j
    extension_progress = {}
    query_log = []
    epoch_rows = []
    iteration = 0
    triu_p, triu_q = np.triu_indices(cfg.batch_size, k=1)

    for epoch in range(cfg.epochs):
        lam = lambda_at(schedule, epoch)
        order = rng.permutation(n)
        batch_losses = []
        for b in range(n_batches):
            ids = order[b * cfg.batch_size:(b + 1) * cfg.batch_size].tolist()
            xa, xb = augment_batch(x[ids], cfg.augment, rng)
            batch2n = np.vstack([xa, xb])
            cache = forward(params, batch2n)

            if active:
                arr = np.asarray(ids)
                lo = np.minimum(arr[triu_p], arr[triu_q])
                hi = np.maximum(arr[triu_p], arr[triu_q])
                encountered.update((lo * n + hi).tolist())
                budget.total = int(np.floor(cfg.budget_fraction * len(encountered)))
                scores = {}
                pairs = select_pairs(cache.z, ids, history, store, budget,
                                     cfg.strategy, rng, iteration=iteration,
                                     yhat=cache.yhat, scores_out=scores)
                for pair in pairs:
                    ans = oracle.answer(pair[0], pair[1], epoch)
                    if ans is None:
                        continue  # expired or skipped; budget not charged
                    store.record(pair, ans, "oracle", epoch=epoch)
                    budget.spent += 1
                    query_log.append({"epoch": epoch, "batch": b,
                                      "pair": list(pair),
                                      "score": scores.get(pair),
                                      "strategy": cfg.strategy, "answer": ans})

            cmat = build_query_matrix(store, ids, lam)
            breakdown, d_zhat, d_yhat = total_loss_grad(
                cache.zhat, cache.yhat, cmat, cfg.tau_instance,
                cfg.tau_cluster, use_rep=cfg.use_rep_space,
                use_assign=cfg.use_assign_space)
            if not np.isfinite(breakdown.total):
                raise TrainingDiverged(epoch, b)
            grads = backward(params, cache, d_zhat, d_yhat)
            adam_step(params, grads, adam, cfg.learning_rate)
            batch_losses.append(breakdown.as_dict())
            iteration += 1
            _notify(observer, "on_batch", {
                "epoch": epoch, "batch": b, "loss_total": breakdown.total,
                "queries_spent": budget.spent, "budget_total": budget.total,
            })

        pseudo_added = 0
        if (cfg.label_extension and epoch >= gate_epoch
                and (epoch - gate_epoch) % cfg.extend_every == 0
                and store.count("oracle") > 0):
            full = forward(params, x)
            pseudo_added = extend_labels(store, full.zhat, cfg.extend_threshold,
                                         epoch=epoch, progress=extension_progress)

        metrics = evaluate(params, dataset)
        epoch_rows.append({
            "epoch": epoch, "lambda": lam,
            "loss": _mean_breakdown(batch_losses) if batch_losses else None,
            "metrics": metrics, "queries_spent": budget.spent,
            "pseudo_added": pseudo_added,
        })
        _notify(observer, "on_epoch", epoch, params, dataset)

    final_assignment = assign_clusters(params, x)
    excluded = [name for name, used in (("representation", cfg.use_rep_space),
                                        ("assignment", cfg.use_assign_space))
                if not used]
    record = RunRecord(
        config=cfg.as_dict(),
        seed=cfg.seed,
        epochs=epoch_rows,
        query_log=query_log,
        final_assignment=final_assignment.tolist(),
        final_metrics=evaluate(params, dataset),
        queries_spent=budget.spent,
        budget_total=budget.total,
        candidate_pairs_encountered=len(encountered),
        excluded_spaces=excluded,
        annotation_counts={"oracle": store.count("oracle"),
                           "pseudo": store.count("pseudo")},
    )
    return params, record
