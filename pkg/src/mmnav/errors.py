"""Exception hierarchy shared by all modules.

CLI exit codes: 0 ok, 2 configuration error, 3 runtime error,
4 acceptance-check failure.
"""


class MmnavError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class ConfigError(MmnavError):
    """Invalid, unknown or out-of-range configuration value."""

    exit_code = 2


class InvalidActionError(MmnavError):
    """Action contains non-finite components."""


class ContractViolation(MmnavError):
    """An operation was called outside its precondition (e.g. step after done)."""


class SceneGenerationError(MmnavError):
    """Rejection sampling could not produce a feasible scene."""


class CheckpointError(MmnavError):
    """Checkpoint file is malformed or does not match the architecture registry."""


class TrainingDiverged(MmnavError):
    """A training loss became non-finite."""
