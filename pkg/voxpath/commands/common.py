"""Helpers shared by the command modules."""

import argparse
from pathlib import Path
from typing import Any, Optional, TypeVar

from pydantic import BaseModel, ValidationError

from voxpath.config import describe_validation_error
from voxpath.errors import ConfigError

M = TypeVar("M", bound=BaseModel)


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def override(model: M, section: str, **changes: Any) -> M:
    """Copy a config section with flag values applied; None means 'not given'."""
    changes = {k: v for k, v in changes.items() if v is not None}
    if not changes:
        return model
    try:
        return type(model).model_validate({**model.model_dump(), **changes})
    except ValidationError as e:
        raise ConfigError(f"{section}: {describe_validation_error(e)}")


def require_path(flag_value: Optional[str], default: Optional[str], flag: str) -> Path:
    """The flag, else the [paths] default, else a config error."""
    value = flag_value or default
    if not value:
        raise ConfigError(f"{flag} is required (or set it under [paths] in the config)")
    return Path(value)
