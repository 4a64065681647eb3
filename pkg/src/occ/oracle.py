"""Same-cluster oracles, the annotation store, and label extension.

An orientation map sends each latent class to a target cluster; a simulated
oracle answers "same" iff both samples' classes land in one target cluster.
Answers accumulate in an AnnotationStore keyed by unordered sample-id pair,
with provenance oracle or pseudo. Pseudo answers come from label extension:
samples whose embeddings are highly similar to an annotated one inherit its
pair relations. Pseudo answers never overwrite anything; an oracle answer
upgrades a pseudo one.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError
from .losses import QueryMatrix

log = logging.getLogger(__name__)

SAME = "same"
DIFFERENT = "different"


@dataclass(frozen=True)
class OrientationMap:
    """Total map latent-class-id -> target-cluster-id."""

    name: str
    mapping: dict

    def __post_init__(self):
        if len(set(self.mapping.values())) < 2:
            raise ConfigError(f"orientation {self.name!r} needs at least 2 target clusters")

    def cluster_of(self, class_id):
        try:
            return self.mapping[class_id]
        except KeyError:
            raise InputError(f"latent class {class_id} not covered by orientation {self.name!r}")

    def labels(self, class_ids):
        return np.asarray([self.cluster_of(int(c)) for c in np.asarray(class_ids)])

    def partition(self):
        """Frozen partition of latent classes, for comparing orientations."""
        groups = {}
        for cls, tgt in self.mapping.items():
            groups.setdefault(tgt, set()).add(cls)
        return frozenset(frozenset(g) for g in groups.values())


def simulated_answer(pair, dataset, orientation):
    """Ground-truth same-cluster answer under the given orientation."""
    i, j = pair
    n = len(dataset.classes)
    for idx in (i, j):
        if not 0 <= idx < n:
            raise InputError(f"sample id {idx} outside dataset of size {n}")
    same = orientation.cluster_of(int(dataset.classes[i])) == orientation.cluster_of(int(dataset.classes[j]))
    return SAME if same else DIFFERENT


def _key(pair):
    i, j = pair
    if i == j:
        raise InputError(f"self pair ({i}, {i}) cannot be annotated")
    return (i, j) if i < j else (j, i)


class AnnotationStore:
    """Accumulated yes/no same-cluster answers keyed by unordered pair."""

    def __init__(self):
        self._answers = {}  # key -> {"answer", "provenance", "epoch"}
        self._samples = set()
        self._same_adj = {}  # sample -> set of same-cluster partners
        self._oracle_rel = {}  # sample -> [(other, answer), ...], append-only

    def __len__(self):
        return len(self._answers)

    def answered(self, pair):
        return _key(pair) in self._answers

    def answer_keys(self):
        """Live view of the normalized (i, j) keys, for hot paths."""
        return self._answers.keys()

    def answer_of(self, pair):
        rec = self._answers.get(_key(pair))
        return None if rec is None else rec["answer"]

    def provenance_of(self, pair):
        rec = self._answers.get(_key(pair))
        return None if rec is None else rec["provenance"]

    def samples(self):
        return set(self._samples)

    def oracle_samples(self):
        out = set()
        for (i, j), rec in self._answers.items():
            if rec["provenance"] == "oracle":
                out.add(i)
                out.add(j)
        return out

    def count(self, provenance=None):
        if provenance is None:
            return len(self._answers)
        return sum(1 for rec in self._answers.values() if rec["provenance"] == provenance)

    def items(self):
        return list(self._answers.items())

    def relations_of(self, sample):
        """All (other_sample, answer) relations the sample participates in."""
        out = []
        for (i, j), rec in self._answers.items():
            if i == sample:
                out.append((j, rec["answer"]))
            elif j == sample:
                out.append((i, rec["answer"]))
        return out

    def same_pairs(self):
        return [k for k, rec in self._answers.items() if rec["answer"] == SAME]

    def same_neighbors(self, sample):
        return self._same_adj.get(sample, frozenset())

    def oracle_sources(self):
        """Samples with at least one oracle-provenance relation, sorted."""
        return sorted(self._oracle_rel)

    def oracle_relations(self, sample):
        """Append-only list of the sample's oracle-answered relations."""
        return self._oracle_rel.get(sample, [])

    def record(self, pair, answer, provenance, epoch=None):
        """Store one answer. Returns True if the store changed.

        Oracle answers win over pseudo ones; a duplicate oracle answer is an
        idempotent no-op with a warning; pseudo answers never overwrite.
        """
        if answer not in (SAME, DIFFERENT):
            raise InputError(f"answer must be {SAME!r} or {DIFFERENT!r}, got {answer!r}")
        if provenance not in ("oracle", "pseudo"):
            raise InputError(f"provenance must be 'oracle' or 'pseudo', got {provenance!r}")
        key = _key(pair)
        existing = self._answers.get(key)
        if existing is not None:
            if provenance == "pseudo":
                return False
            if existing["provenance"] == "oracle":
                log.warning("duplicate oracle answer for pair %s ignored", key)
                return False
            # oracle re-answer of a pseudo pair: overwrite and upgrade
        self._answers[key] = {"answer": answer, "provenance": provenance, "epoch": epoch}
        self._samples.update(key)
        i, j = key
        if answer == SAME:
            self._same_adj.setdefault(i, set()).add(j)
            self._same_adj.setdefault(j, set()).add(i)
        else:
            self._same_adj.get(i, set()).discard(j)
            self._same_adj.get(j, set()).discard(i)
        if provenance == "oracle":
            self._oracle_rel.setdefault(i, []).append((j, answer))
            self._oracle_rel.setdefault(j, []).append((i, answer))
        return True

    def save_jsonl(self, path):
        with open(path, "w") as f:
            for (i, j), rec in sorted(self._answers.items()):
                f.write(json.dumps({"pair": [i, j], "answer": rec["answer"],
                                    "provenance": rec["provenance"],
                                    "epoch": rec["epoch"]}) + "\n")

    @classmethod
    def load_jsonl(cls, path):
        store = cls()
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    i, j = rec["pair"]
                    store.record((i, j), rec["answer"], rec["provenance"],
                                 epoch=rec.get("epoch"))
                except (KeyError, ValueError) as exc:
                    raise InputError(f"{path}:{lineno}: bad annotation record ({exc})")
        return store


def record_answer(store, pair, answer, provenance, epoch=None):
    store.record(pair, answer, provenance, epoch=epoch)
    return store


@dataclass
class LambdaSchedule:
    """Linear decay of the queried-pair weight from lambda_max to 0."""

    lambda_max: float
    total_epochs: int

    def __post_init__(self):
        if self.lambda_max <= 0:
            raise ConfigError(f"lambda_max must be > 0, got {self.lambda_max}")
        if self.total_epochs <= 0:
            raise ConfigError(f"total_epochs must be > 0, got {self.total_epochs}")


def lambda_at(schedule, epoch):
    """lambda(e) = lambda_max * (E - e) / E for 0 <= e <= E."""
    if not 0 <= epoch <= schedule.total_epochs:
        raise InputError(f"epoch {epoch} outside [0, {schedule.total_epochs}]")
    return schedule.lambda_max * (schedule.total_epochs - epoch) / schedule.total_epochs


def build_query_matrix(store, ids, lam):
    """N x N matrix with lam at stored same-cluster pairs, 0 elsewhere."""
    if lam < 0:
        raise InputError(f"lambda must be >= 0, got {lam}")
    n = len(ids)
    c = np.zeros((n, n))
    if lam > 0:
        adj = store._same_adj
        empty = frozenset()
        for p in range(n):
            neighbors = adj.get(ids[p], empty)
            if not neighbors:
                continue
            for q in range(p + 1, n):
                if ids[q] in neighbors and ids[q] != ids[p]:
                    c[p, q] = lam
                    c[q, p] = lam
    return QueryMatrix(values=c, lam=lam)


def close_same_transitively(store, epoch=None):
    """Complete the same-relation transitively with pseudo answers.

    Exploration tool, off by default in training: the query matrix normally
    uses only recorded pairs. Walks the connected components of the stored
    same-pairs and records every missing in-component pair as a pseudo
    same answer. Returns the number of pairs added.
    """
    parent = {}

    def find(a):
        parent.setdefault(a, a)
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in store.same_pairs():
        parent[find(i)] = find(j)
    components = {}
    for node in parent:
        components.setdefault(find(node), []).append(node)
    added = 0
    for members in components.values():
        members.sort()
        for a_idx, i in enumerate(members):
            for j in members[a_idx + 1:]:
                if store.record((i, j), SAME, "pseudo", epoch=epoch):
                    added += 1
    return added


def extend_labels(store, zhat, threshold, epoch=None, progress=None):
    """Pseudo-label samples that look almost identical to annotated ones.

    For every oracle-annotated sample i and every other sample k with
    cos(zhat[i], zhat[k]) > threshold, each of i's oracle-answered
    relations (i, x) -> answer is recorded as (k, x) -> answer with pseudo
    provenance, skipping pairs that already hold any answer. Propagation is
    single hop: pseudo relations are never themselves copied, so every
    pseudo answer traces back to one oracle answer plus one high-confidence
    similarity. Returns the number of new pseudo answers.

    `progress` is an optional dict cache for repeated calls on a growing
    store: it remembers how many of each source's relations were already
    copied to each target, so unchanged (source, target) combinations are
    skipped. Results are identical with or without it.
    """
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"pseudo-label threshold must be in (0, 1), got {threshold}")
    zhat = np.asarray(zhat, dtype=np.float64)
    sources = store.oracle_sources()
    if not sources:
        return 0
    n = zhat.shape[0]

    norms = np.linalg.norm(zhat, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    zn = zhat / safe[:, None]
    sims = zn[sources] @ zn.T

    added = 0
    for a, i in enumerate(sources):
        relations = store.oracle_relations(i)
        done = None
        if progress is not None:
            done = progress.get(i)
            if done is None:
                done = progress[i] = np.zeros(n, dtype=np.int64)
        targets = np.nonzero(sims[a] > threshold)[0]
        for k in targets:
            k = int(k)
            if k == i:
                continue
            start = 0
            if done is not None:
                start = int(done[k])
                if start >= len(relations):
                    continue
            for other, answer in relations[start:]:
                if other == k:
                    continue
                if store.record((k, other), answer, "pseudo", epoch=epoch):
                    added += 1
            if done is not None:
                done[k] = len(relations)
    return added
