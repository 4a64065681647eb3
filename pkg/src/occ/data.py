"""Synthetic dual-orientation datasets, file ingestion, and scatter export.

The generator plants two independent signals in disjoint feature blocks:
block 1 carries a cluster code for orientation A, block 2 one for
orientation B, plus isotropic gaussian noise. Both orientations are
therefore recoverable from the features, and an oracle following either
one induces a different "correct" 2-way clustering of the same points.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError
from .oracle import OrientationMap

DEFAULT_ORIENTATION_A = OrientationMap(name="A", mapping={0: 0, 1: 0, 2: 1, 3: 1})
DEFAULT_ORIENTATION_B = OrientationMap(name="B", mapping={0: 0, 1: 1, 2: 0, 3: 1})


@dataclass
class SyntheticSpec:
    n_classes: int = 4
    per_class: int = 500
    dim: int = 4
    separation_a: float = 0.4
    separation_b: float = 0.34
    noise_sigma: float = 0.1
    orientation_a: OrientationMap = field(default_factory=lambda: DEFAULT_ORIENTATION_A)
    orientation_b: OrientationMap = field(default_factory=lambda: DEFAULT_ORIENTATION_B)
    seed: int = 0

    def validate(self):
        if self.n_classes < 2:
            raise ConfigError("need at least 2 latent classes")
        if self.per_class < 1:
            raise ConfigError("per_class must be >= 1")
        if self.dim < 2:
            raise ConfigError("feature dim must be >= 2")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        for om in (self.orientation_a, self.orientation_b):
            missing = set(range(self.n_classes)) - set(om.mapping)
            if missing:
                raise ConfigError(f"orientation {om.name!r} misses classes {sorted(missing)}")
        if self.orientation_a.partition() == self.orientation_b.partition():
            raise ConfigError("the two orientations induce identical partitions")
        return self


@dataclass
class Dataset:
    features: np.ndarray  # (n, d)
    classes: np.ndarray   # (n,) latent class ids
    orient_a: np.ndarray  # (n,) orientation-A cluster labels
    orient_b: np.ndarray  # (n,) orientation-B cluster labels
    provenance: str = ""

    def __len__(self):
        return len(self.classes)

    @property
    def dim(self):
        return self.features.shape[1]


def _cluster_code(cluster_id, width, separation):
    code = np.zeros(width)
    code[cluster_id % width] = separation
    return code


def class_center(spec, class_id):
    """Noiseless feature point of one latent class: its two cluster codes."""
    wa = spec.dim // 2
    wb = spec.dim - wa
    a = spec.orientation_a.cluster_of(class_id)
    b = spec.orientation_b.cluster_of(class_id)
    return np.concatenate([
        _cluster_code(a, wa, spec.separation_a),
        _cluster_code(b, wb, spec.separation_b),
    ])


def generate_synthetic(spec, rng=None):
    """Pure function of (spec, rng); default rng comes from spec.seed."""
    spec.validate()
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    centers = np.stack([class_center(spec, c) for c in range(spec.n_classes)])
    classes = np.repeat(np.arange(spec.n_classes), spec.per_class)
    features = centers[classes] + rng.standard_normal((len(classes), spec.dim)) * spec.noise_sigma
    return Dataset(
        features=features,
        classes=classes,
        orient_a=spec.orientation_a.labels(classes),
        orient_b=spec.orientation_b.labels(classes),
        provenance=f"synthetic(seed={spec.seed})",
    )


def save_dataset(dataset, path):
    """CSV schema: f0,..,f{d-1},class,orientA,orientB."""
    d = dataset.dim
    header = [f"f{k}" for k in range(d)] + ["class", "orientA", "orientB"]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row, cls, oa, ob in zip(dataset.features, dataset.classes,
                                    dataset.orient_a, dataset.orient_b):
            writer.writerow([repr(float(v)) for v in row] + [int(cls), int(oa), int(ob)])


def _parse_rows(rows_iter, path):
    feats, classes, oa, ob = [], [], [], []
    for lineno, rec in rows_iter:
        try:
            d = 0
            vec = []
            while f"f{d}" in rec:
                vec.append(float(rec[f"f{d}"]))
                d += 1
            if not vec:
                raise KeyError("f0")
            feats.append(vec)
            classes.append(int(rec["class"]))
            oa.append(int(rec["orientA"]) if rec.get("orientA") not in (None, "") else -1)
            ob.append(int(rec["orientB"]) if rec.get("orientB") not in (None, "") else -1)
        except (KeyError, ValueError, TypeError) as exc:
            raise InputError(f"{path}:{lineno}: bad dataset record ({exc})")
    if not feats:
        raise InputError(f"{path}: empty dataset")
    widths = {len(v) for v in feats}
    if len(widths) != 1:
        raise InputError(f"{path}: inconsistent feature widths {sorted(widths)}")
    return (np.asarray(feats, dtype=np.float64), np.asarray(classes),
            np.asarray(oa), np.asarray(ob))


def load_dataset(path):
    """Parse the CSV schema above, or JSON lines with the same keys."""
    path = str(path)
    if path.endswith(".jsonl") or path.endswith(".ndjson"):
        with open(path) as f:
            rows = [(lineno, json.loads(line)) for lineno, line in
                    enumerate(f, 1) if line.strip()]
    else:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or "class" not in reader.fieldnames:
                raise InputError(f"{path}:1: missing class column")
            rows = list(enumerate(reader, 2))
    feats, classes, oa, ob = _parse_rows(rows, path)
    return Dataset(features=feats, classes=classes, orient_a=oa, orient_b=ob,
                   provenance=path)


def pca_2d(x):
    """Deterministic top-2 principal directions of the rows of x.

    Sign fix: each component's largest-magnitude loading is made positive.
    Returns (coords (n, 2), components (2, d)).
    """
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2].copy()
    if comps.shape[0] < 2:  # single feature column
        comps = np.vstack([comps, np.zeros_like(comps[0])])
    for k in range(2):
        j = np.argmax(np.abs(comps[k]))
        if comps[k, j] < 0:
            comps[k] = -comps[k]
    return centered @ comps.T, comps


def scatter_rows(dataset, embeddings, assignment):
    """Row dicts for the 2-d projection export and the live scatter view."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.shape[0] != len(dataset):
        raise InputError("embedding count does not match dataset size")
    coords, _ = pca_2d(embeddings)
    rows = []
    for k in range(len(dataset)):
        rows.append({
            "pc1": float(coords[k, 0]),
            "pc2": float(coords[k, 1]),
            "class": int(dataset.classes[k]),
            "orientA": int(dataset.orient_a[k]),
            "orientB": int(dataset.orient_b[k]),
            "cluster": int(assignment[k]),
        })
    return rows


def export_scatter(dataset, embeddings, assignment, path):
    """CSV of 2-d projections: pc1,pc2,class,orientA,orientB,cluster."""
    rows = scatter_rows(dataset, embeddings, assignment)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["pc1", "pc2", "class",
                                               "orientA", "orientB", "cluster"])
        writer.writeheader()
        writer.writerows(rows)
    return path
