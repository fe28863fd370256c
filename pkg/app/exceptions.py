# app/exceptions.py

"""
Exception hierarchy for HILONet.

Library code raises these; the command-line layer catches ``HiloError`` and turns it
into a logged message and a nonzero exit code.
"""


class HiloError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(HiloError, ValueError):
    """Dimension or architecture mismatch between arrays, networks or records."""


class NumericalError(HiloError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class DivergenceError(NumericalError):
    """
    Training produced a non-finite loss.

    Attributes:
        diagnostics (dict): Batch statistics captured at the failing update.
        curve (LearningCurve or None): Evaluation points collected before the failure.
    """

    def __init__(self, message, diagnostics=None, curve=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
        self.curve = curve


class DemoParseError(HiloError, ValueError):
    """A ``.hilodemo`` file is malformed, truncated or inconsistent."""


class CurveParseError(HiloError, ValueError):
    """A learning-curve CSV file is malformed."""


class ConfigError(HiloError, ValueError):
    """Invalid configuration; ``errors`` maps offending keys to messages."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}


class UnknownEnvironmentError(HiloError, KeyError):
    """No environment is registered under the requested name."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown environment"


class EpisodeFinishedError(HiloError, RuntimeError):
    """``step`` was called on an environment whose episode is already done."""


class ExpertFailureError(HiloError, RuntimeError):
    """The scripted expert did not solve the task from a given start seed."""

    def __init__(self, message, seed):
        super().__init__(message)
        self.seed = seed


class EmptyBufferError(HiloError, IndexError):
    """Sampling was requested from an empty replay buffer."""


class InvalidTransitionError(HiloError, ValueError):
    """A transition failed its invariants on insertion."""


class CheckpointError(HiloError, ValueError):
    """A checkpoint file has an unsupported version or is missing entries."""
