"""Exception hierarchy shared by the services and the command line."""

from typing import Optional


class VoxpathError(Exception):
    """Base class for every error the toolkit raises on purpose."""

    category = "internal"
    exit_code = 1


class ConfigError(VoxpathError):
    """A configuration or spec file holds an unknown key or a bad value."""

    category = "config"
    exit_code = 2


class InvalidArgumentError(VoxpathError, ValueError):
    """An operation was called with arguments violating its preconditions."""

    category = "config"
    exit_code = 2


class DataError(VoxpathError):
    """Input data (manifest, audio, cache, model) cannot be used."""

    category = "data"
    exit_code = 3


class DecodeError(DataError):
    """A WAV byte stream is malformed or uses an unsupported encoding."""


class ModelFormatError(DataError):
    """A model, cache or hyperparameter file has the wrong format version."""


class ConvergenceError(VoxpathError):
    """The SMO solver hit its iteration guard before meeting the KKT tolerance."""

    category = "convergence"
    exit_code = 4

    def __init__(
        self,
        message: str,
        duality_gap: Optional[float] = None,
        kkt_violation: Optional[float] = None,
    ):
        super().__init__(message)
        self.duality_gap = duality_gap
        self.kkt_violation = kkt_violation


class StorageError(VoxpathError):
    """Reading or writing a file failed."""

    category = "io"
    exit_code = 5

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path
