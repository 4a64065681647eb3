"""Stochastic augmentations producing two correlated views of each sample.

Feature-vector analogues of the usual image transforms: per-feature scale
jitter, additive gaussian noise and feature dropout. With all knobs at zero
the pipeline is exactly the identity.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError


@dataclass
class AugmentConfig:
    noise_sigma: float = 0.25
    dropout_prob: float = 0.0
    scale_jitter: float = 0.3
    seed: int = 0

    def validate(self):
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be finite and >= 0, got {self.noise_sigma}")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ConfigError(f"dropout_prob must be in [0, 1], got {self.dropout_prob}")
        if not np.isfinite(self.scale_jitter) or self.scale_jitter < 0:
            raise ConfigError(f"scale_jitter must be finite and >= 0, got {self.scale_jitter}")
        return self


def _one_view(x, cfg, rng):
    # jitter multiplies, noise adds, dropout zeroes; draws happen even when
    # a knob is zero so the rng stream does not depend on config values
    factors = rng.uniform(1.0 - cfg.scale_jitter, 1.0 + cfg.scale_jitter, size=x.shape)
    noise = rng.standard_normal(x.shape) * cfg.noise_sigma
    keep = rng.random(x.shape) >= cfg.dropout_prob
    return (x * factors + noise) * keep


def augment_batch(x, cfg, rng=None):
    """Two independently augmented views of a (rows, dim) matrix."""
    cfg.validate()
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InputError("augment input contains non-finite values")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    return _one_view(x, cfg, rng), _one_view(x, cfg, rng)


def augment_pair(x, cfg, rng=None):
    """Two views of a single feature vector."""
    xa, xb = augment_batch(np.asarray(x, dtype=np.float64)[None, :], cfg, rng)
    return xa[0], xb[0]
