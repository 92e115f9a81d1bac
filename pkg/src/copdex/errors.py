"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CopdexError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(CopdexError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(CopdexError):
    """Invalid experiment configuration.

    Collects every violation found, not just the first, so a user can fix a
    config file in one pass.

    Parameters
    ----------
    violations : list of str
        Human-readable messages, each prefixed with the field path
        (e.g. ``"copula.tau: must lie in [0, 1)"``).
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SingularInformationError(CopdexError):
    """A design information matrix is singular or too ill-conditioned.

    Attributes
    ----------
    node_index : int or None
        Index of the quadrature node at which singularity was detected.
    gamma : ndarray or None
        Parameter vector of that node.
    """

    def __init__(self, message, node_index=None, gamma=None):
        self.node_index = node_index
        self.gamma = gamma
        super().__init__(message)


class InfeasibleError(CopdexError):
    """No nonsingular starting design could be constructed."""


class GridTooLargeError(CopdexError):
    """The exact-summation outcome grid exceeds its cell budget.

    Callers should switch to the Monte Carlo estimator, which the message
    spells out.
    """


class ExcludedOutcomeError(CopdexError):
    """A requested outcome has zero (or numerically vanishing) probability."""
