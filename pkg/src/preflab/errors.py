"""Shared exception types; the CLI maps these onto exit codes."""

from __future__ import annotations


class PreflabError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(PreflabError):
    """Invalid configuration or argument combination (CLI exit code 2)."""


class DataFormatError(PreflabError):
    """Malformed dataset file; message names the offending line or field."""


class NumericalAbort(PreflabError):
    """Non-finite loss or gradient during training (CLI exit code 3)."""

    def __init__(self, step: int, sample: int, detail: str = ""):
        self.step = step
        self.sample = sample
        self.detail = detail
        msg = f"non-finite value at step {step}, sample {sample}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)

    def __reduce__(self):
        # args holds the rendered message, so the default reduce would call
        # __init__ with the wrong signature when crossing a process pool
        return (NumericalAbort, (self.step, self.sample, self.detail))
