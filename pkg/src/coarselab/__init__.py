"""Finite-window computations for group actions on metric spaces.

The package operates on explicit finite windows cut out of infinite
discrete metric spaces: verified metrics, word metrics on finitely
generated groups, group actions restricted to a window, banded
(finite-propagation) operators over a window, and the kernel
certificates used to witness amenability-type regularity on the
window. Everything is exact where the inputs are exact: distances are
integers, operator entries and kernel values are rationals, and
positivity checks run over the integers before any floating-point
cross-check.
"""

from coarselab.errors import (
    CoarselabError,
    ConfigurationError,
    DomainError,
    InvariantViolation,
    ResourceError,
)

__version__ = "0.1.0"

__all__ = [
    "CoarselabError",
    "ConfigurationError",
    "DomainError",
    "InvariantViolation",
    "ResourceError",
    "__version__",
]
