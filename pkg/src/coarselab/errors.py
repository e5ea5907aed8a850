"""Exception hierarchy shared across the package.

The split matters for the command line front end: configuration
problems exit with status 2, while a check that ran to completion and
failed exits with status 1. Library code raises; it never calls
sys.exit.
"""


class CoarselabError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(CoarselabError):
    """Bad input: malformed config file, unknown key, unparsable element."""


class DomainError(CoarselabError):
    """Structurally valid input that violates a mathematical precondition.

    Example: a point outside the window handed to an operator, or a
    kernel evaluated at radii the window cannot support.
    """


class ResourceError(CoarselabError):
    """A requested computation exceeds a configured size bound."""


class InvariantViolation(CoarselabError):
    """Two independent routes to the same quantity disagreed.

    This always indicates an implementation fault, never bad user
    input, so it is raised rather than reported as a failed check.
    """
