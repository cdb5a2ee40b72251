"""Exception types shared across the package.

The CLI maps these to exit codes: ConfigError -> 2, DiagnosticError -> 3,
IO failures -> 4.
"""


class InputError(ValueError):
    """Invalid argument to a library operation."""


class DomainError(InputError):
    """Operation requires a capability the domain does not have (e.g. time)."""


class UnsupportedError(InputError):
    """Requested a parameter regime that is deliberately out of scope."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class DiagnosticError(RuntimeError):
    """A numerical diagnostic fired (heavy tails, divergent integral, ...)."""
