"""Shared exception types for the occ package."""


class OccError(Exception):
    """Base class for all occ-specific errors."""


class ConfigError(OccError, ValueError):
    """A configuration value or file was rejected before any work started."""


class InputError(OccError, ValueError):
    """An input (shape, id, schema) violated a precondition."""


class DegenerateInputError(InputError):
    """Input is technically well-formed but mathematically degenerate,
    e.g. a zero vector passed to cosine similarity."""


class NumericError(OccError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class TrainingDiverged(NumericError):
    """Training produced a non-finite loss; carries the epoch/batch."""

    def __init__(self, epoch, batch, detail=""):
        self.epoch = epoch
        self.batch = batch
        msg = f"non-finite loss at epoch {epoch}, batch {batch}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
