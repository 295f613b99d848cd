"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` so the CLI can print a
single ``error code=... key=...`` line and exit non-zero.
"""

from __future__ import annotations


class SlicemarlError(Exception):
    code = "error"

    def __init__(self, message: str, *, key: str | None = None):
        super().__init__(message)
        self.key = key

    def machine_line(self) -> str:
        parts = [f"error code={self.code}"]
        if self.key is not None:
            parts.append(f"key={self.key}")
        parts.append(f"msg={str(self)!r}")
        return " ".join(parts)


class ConstraintError(SlicemarlError, ValueError):
    """A configuration value violates its declared range."""

    code = "constraint_violation"


class UnknownKeyError(SlicemarlError, KeyError):
    code = "unknown_key"

    def __str__(self) -> str:  # KeyError would repr() the message
        return self.args[0]


class ConfigSyntaxError(SlicemarlError, ValueError):
    code = "malformed_config"


class ConfigNotFoundError(SlicemarlError, FileNotFoundError):
    code = "missing_file"


class AllocationError(SlicemarlError, ValueError):
    """An RBG allocation breaks the per-TTI feasibility constraints."""

    code = "invalid_allocation"


class CoverageError(SlicemarlError, ValueError):
    """Results do not cover the algorithms/loads a report asks for."""

    code = "missing_coverage"


class EpisodeError(SlicemarlError, RuntimeError):
    code = "episode_failure"
