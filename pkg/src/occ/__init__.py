"""Oracle-guided contrastive clustering.

A desk-scale engine that trains a small encoder with an active contrastive
loss whose positive pairs are extended by same-cluster answers from an
oracle, selects which pairs to query with the cyclic similarity discrepancy
score, and numerically checks the clustering-risk decomposition and its
importance-sampling bound.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateInputError,
    InputError,
    NumericError,
    OccError,
    TrainingDiverged,
)

__all__ = [
    "ConfigError",
    "DegenerateInputError",
    "InputError",
    "NumericError",
    "OccError",
    "TrainingDiverged",
    "__version__",
]
