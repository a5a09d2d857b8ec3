"""Exception hierarchy shared by every ddkit module.

Every error carries enough context to be actionable: the operation that
raised it, the offending value (when there is one), and the module of
origin.  The CLI maps these classes onto process exit codes, so library
code must raise them rather than bare ValueError/RuntimeError.
"""

from __future__ import annotations


class DdkitError(Exception):
    """Base class for all ddkit errors."""

    def __init__(self, message, *, operation=None, value=None, module=None):
        self.operation = operation
        self.value = value
        self.module = module
        parts = []
        tag = ".".join(p for p in (module, operation) if p)
        if tag:
            parts.append(f"[{tag}]")
        parts.append(message)
        if value is not None:
            parts.append(f"(value={value!r})")
        super().__init__(" ".join(parts))


class ValidationError(DdkitError):
    """Malformed input: bad parameter ranges, bad config files, bad grids."""


class DomainError(DdkitError):
    """A state-space point or interval lies outside the model's domain."""


class NumericError(DdkitError):
    """A numerical routine failed to reach its accuracy target."""

    def __init__(self, message, *, partial=None, **kw):
        self.partial = partial
        super().__init__(message, **kw)


class DegenerateBasisError(NumericError):
    """A solution-basis denominator vanished relative to its operands."""


class UnsupportedModelError(ValidationError):
    """The requested operation needs model structure this model lacks."""
