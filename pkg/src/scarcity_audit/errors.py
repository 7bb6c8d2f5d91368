"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: validation and usage problems exit 1,
I/O failures exit 2, domain errors exit 3.
"""


class ValidationError(ValueError):
    """Input data or a policy violates an invariant."""


class ParseError(ValidationError):
    """A population file row could not be parsed."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DomainError(ValueError):
    """A quantity was requested where it is mathematically undefined."""


class UsageError(ValueError):
    """A caller asked for something that cannot be run (empty grid, zero trials)."""


class UndefinedAtBreakpoint(DomainError):
    """A slope was requested on a budget where it changes (or outside any segment)."""


class SignUndefined(DomainError):
    """The slope of an absolute gap was requested where the two rates are equal."""
