"""Run configuration files: schema, defaults, validation, dotted overrides.

A run config is YAML (or JSON, which YAML subsumes) with sections data,
model, train, oracle, query and output. Every field has a default; the file
only states what differs. CLI flags of the form --section.key value override
file values, and OCC_OUT_DIR overrides the output directory.
"""

import copy
import os

import yaml

from .augment import AugmentConfig
from .data import SyntheticSpec
from .errors import ConfigError
from .oracle import OrientationMap
from .trainer import TrainConfig

DEFAULTS = {
    "data": {
        "path": None,            # load a dataset file instead of generating
        "classes": 4,
        "per_class": 500,
        "dim": 4,
        "separation_a": 0.4,
        "separation_b": 0.34,
        "noise_sigma": 0.1,
        "orientation_a": {0: 0, 1: 0, 2: 1, 3: 1},
        "orientation_b": {0: 0, 1: 1, 2: 0, 3: 1},
        "seed": 0,
    },
    "model": {
        "hidden_dims": [64, 64],
        "rep_dim": 32,
    },
    "train": {
        "n_clusters": 2,
        "epochs": 150,
        "batch_size": 64,
        "learning_rate": 3e-3,
        "tau_instance": 0.5,
        "tau_cluster": 1.0,
        "lambda_max": 50.0,
        "label_extension": True,
        "extend_threshold": 0.95,
        "extend_gate_fraction": 0.15,
        "extend_every": 2,
        "use_rep_space": True,
        "use_assign_space": True,
        "seed": 0,
        "augment": {
            "noise_sigma": 0.25,
            "dropout_prob": 0.0,
            "scale_jitter": 0.3,
        },
    },
    "oracle": {
        "orientation": "A",      # A | B, or interactive: true
        "interactive": False,
        "timeout": 60.0,
    },
    "query": {
        "strategy": "csd",
        "budget_fraction": 0.25,
        "per_batch": 2,
    },
    "output": "runs/latest",
}

# mapping-valued leaves replaced wholesale instead of key-merged
_REPLACE_KEYS = {"orientation_a", "orientation_b"}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if key in _REPLACE_KEYS:
            out[key] = value
        elif isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where)
        elif isinstance(base[key], dict) != isinstance(value, dict):
            raise ConfigError(f"config key {where!r} has the wrong shape")
        else:
            out[key] = value
    return out


def load_config(path=None, overrides=None):
    """Defaults, optionally merged with a file, then with dotted overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as f:
                raw = yaml.safe_load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}")
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        cfg = _merge(cfg, raw)
    for dotted, value in (overrides or {}).items():
        cfg = _apply_override(cfg, dotted, value)
    if os.environ.get("OCC_OUT_DIR"):
        cfg["output"] = os.environ["OCC_OUT_DIR"]
    validate_config(cfg)
    return cfg


def _coerce(old, text):
    """Parse an override string against the type of the value it replaces."""
    if isinstance(old, bool):
        if str(text).lower() in ("1", "true", "yes", "on"):
            return True
        if str(text).lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if isinstance(old, int) and not isinstance(old, bool):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"expected an integer, got {text!r}")
    if isinstance(old, float):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"expected a number, got {text!r}")
    if isinstance(old, list):
        return yaml.safe_load(str(text))
    return text


def _apply_override(cfg, dotted, value):
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[key]
    leaf = keys[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[leaf] = _coerce(node[leaf], value) if isinstance(value, str) else value
    return cfg


def validate_config(cfg):
    """Schema checks cheap enough to run before any real work."""
    build_synthetic_spec(cfg)  # raises on bad data section
    build_train_config(cfg).validate()
    q = cfg["query"]
    if q["strategy"] not in ("csd", "random", "entropy", "none"):
        raise ConfigError(f"query.strategy must be csd|random|entropy|none, got {q['strategy']!r}")
    o = cfg["oracle"]
    if not o["interactive"] and o["orientation"] not in ("A", "B"):
        raise ConfigError(f"oracle.orientation must be 'A' or 'B', got {o['orientation']!r}")
    if o["timeout"] <= 0:
        raise ConfigError("oracle.timeout must be > 0")
    if not isinstance(cfg["output"], str) or not cfg["output"]:
        raise ConfigError("output must be a nonempty path")
    return cfg


def _orientation(name, mapping):
    return OrientationMap(name=name, mapping={int(k): int(v) for k, v in mapping.items()})


def build_synthetic_spec(cfg):
    d = cfg["data"]
    return SyntheticSpec(
        n_classes=int(d["classes"]),
        per_class=int(d["per_class"]),
        dim=int(d["dim"]),
        separation_a=float(d["separation_a"]),
        separation_b=float(d["separation_b"]),
        noise_sigma=float(d["noise_sigma"]),
        orientation_a=_orientation("A", d["orientation_a"]),
        orientation_b=_orientation("B", d["orientation_b"]),
        seed=int(d["seed"]),
    ).validate()


def build_train_config(cfg):
    t = cfg["train"]
    m = cfg["model"]
    q = cfg["query"]
    aug = t["augment"]
    return TrainConfig(
        n_clusters=int(t["n_clusters"]),
        epochs=int(t["epochs"]),
        batch_size=int(t["batch_size"]),
        hidden_dims=tuple(int(h) for h in m["hidden_dims"]),
        rep_dim=int(m["rep_dim"]),
        tau_instance=float(t["tau_instance"]),
        tau_cluster=float(t["tau_cluster"]),
        learning_rate=float(t["learning_rate"]),
        strategy=q["strategy"],
        budget_fraction=float(q["budget_fraction"]),
        queries_per_batch=int(q["per_batch"]),
        lambda_max=float(t["lambda_max"]),
        label_extension=bool(t["label_extension"]),
        extend_threshold=float(t["extend_threshold"]),
        extend_gate_fraction=float(t["extend_gate_fraction"]),
        extend_every=int(t["extend_every"]),
        use_rep_space=bool(t["use_rep_space"]),
        use_assign_space=bool(t["use_assign_space"]),
        augment=AugmentConfig(
            noise_sigma=float(aug["noise_sigma"]),
            dropout_prob=float(aug["dropout_prob"]),
            scale_jitter=float(aug["scale_jitter"]),
            seed=int(t["seed"]),
        ),
        seed=int(t["seed"]),
    )
