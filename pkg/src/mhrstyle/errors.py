"""Exception hierarchy shared by the library and the CLI exit codes."""


class MhrStyleError(Exception):
    exit_code = 1


class DimensionError(MhrStyleError, ValueError):
    exit_code = 3


class ArgumentError(MhrStyleError, ValueError):
    exit_code = 3


class ConfigurationError(MhrStyleError, ValueError):
    exit_code = 4


class ContractError(MhrStyleError, RuntimeError):
    """A game-rule precondition was violated (terminal state, illegal move)."""

    exit_code = 3


class TrainingDiverged(MhrStyleError, FloatingPointError):
    exit_code = 6


class MissingArtifact(MhrStyleError, FileNotFoundError):
    exit_code = 5
