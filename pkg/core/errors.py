# core/errors.py
from __future__ import annotations

import re


class BmgError(Exception):
    """Base for every error the library, CLI and API raise on purpose."""

    status_code = 400

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail

    @property
    def code(self) -> str:
        name = type(self).__name__.removesuffix("Error") or "bmg"
        return re.sub(r"(?<!^)(?=[A-Z])", "_", name).lower()

    def one_line(self) -> str:
        detail = " ".join(self.detail.split())
        return f"error code={self.code} detail={detail}"


class ContractError(BmgError):
    """Shape, dimension or precondition violation."""


class ConfigError(BmgError):
    status_code = 404


class AudioFormatError(BmgError):
    pass


class ArchiveError(BmgError):
    pass


class DivergenceError(BmgError):
    pass


class DegenerateInputError(BmgError):
    pass


def expect(cond: bool, detail: str) -> None:
    if not cond:
        raise ContractError(detail)


__all__ = [
    "BmgError",
    "ContractError",
    "ConfigError",
    "AudioFormatError",
    "ArchiveError",
    "DivergenceError",
    "DegenerateInputError",
    "expect",
]
