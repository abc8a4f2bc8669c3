"""Exception hierarchy shared across the toolkit.

Each class maps to a process exit code so the CLI can translate failures
uniformly: InputError -> 1, ConfigError -> 2, NumericsError -> 3.
"""


class MnmtError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class InputError(MnmtError):
    """Malformed or inconsistent user-supplied data (files, stdin, requests)."""

    exit_code = 1


class ConfigError(MnmtError):
    """Invalid or contradictory configuration (vocab mismatches, bad sizes)."""

    exit_code = 2


class NumericsError(MnmtError):
    """Non-finite values encountered during training or inference."""

    exit_code = 3

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        # Last good checkpoint, when the training loop managed to retain one.
        self.checkpoint = checkpoint
