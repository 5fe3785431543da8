"""Exception hierarchy shared across the package.

Validation failures (bad arguments, out-of-budget sizes, parity violations)
derive from :class:`ValidationError` and map to CLI exit code 1.  Numerical
self-check failures (quadrature disagreement, constants landing outside
their proven intervals) derive from :class:`NumericalInstabilityError` and
map to exit code 2.
"""


class PtlError(Exception):
    """Base class for all package errors."""


class ValidationError(PtlError, ValueError):
    """Invalid argument or configuration."""


class DomainError(ValidationError):
    """Argument outside the mathematical domain of an operation."""


class CapacityError(ValidationError):
    """Requested size exceeds the enumeration budget."""


class BudgetError(PtlError):
    """A runtime budget (pair scan, survivor cap) was exceeded."""


class SamplingError(PtlError):
    """Rejection sampling exhausted its attempt budget (signals a bug)."""


class RunawayError(PtlError):
    """A trial ran far past the expected threshold without emptying."""


class SampleSizeError(ValidationError):
    """Too few samples for the requested statistic."""


class NumericalInstabilityError(PtlError):
    """Two independent evaluation routes disagree beyond tolerance."""
