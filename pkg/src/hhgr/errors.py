"""Exception hierarchy shared across the package.

Usage/validation failures (bad files, bad config, violated preconditions)
map to CLI exit code 2; runtime failures such as divergence map to exit 1.
"""


class HHGRError(Exception):
    """Base class for all package errors."""


class ParseError(HHGRError):
    """A data file could not be parsed (message carries the line number)."""


class ValidationError(HHGRError):
    """Parsed data violates a dataset invariant."""


class SplitError(HHGRError):
    """Requested train/validation/test split is infeasible."""


class SamplingError(HHGRError):
    """Negative sampling is impossible for some subject."""


class GenerationError(HHGRError):
    """Synthetic dataset parameters are out of range."""


class ContractError(HHGRError):
    """An operation precondition was violated (shapes, ranges, symmetry)."""


class ConfigError(HHGRError):
    """Run configuration is malformed or contains unknown keys."""


class CheckpointError(HHGRError):
    """Checkpoint file is malformed or inconsistent with the dataset."""


class DivergenceError(HHGRError):
    """Training produced a non-finite loss.

    Carries the last finite parameter snapshot so callers can persist it.
    """

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good
