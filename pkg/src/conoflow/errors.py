"""Exception types shared across the package."""

from __future__ import annotations


class ConoflowError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(ConoflowError):
    """A model, grid, or experiment configuration is invalid."""


class UnsupportedRegularityError(ConoflowError):
    """An operation was asked for a derivative the regularity class does not admit."""


class SingularPointError(ConoflowError):
    """Evaluation was requested exactly at a non-removable singularity."""


class PreconditionError(ConoflowError):
    """An operation precondition was violated by the caller."""


class NearGlancingError(ConoflowError):
    """An interface crossing degenerated: |xi| fell below the crossing floor.

    Carries the partial state so the caller can reclassify and continue.
    """

    def __init__(self, message, point=None, t_elapsed=0.0):
        super().__init__(message)
        self.point = point
        self.t_elapsed = t_elapsed


class NumericalInstabilityError(ConoflowError):
    """A solver diagnostic (norm drift, divergence) exceeded its hard limit."""


class HypothesisViolationError(ConoflowError):
    """A transport-invariance comparison was refused: the transversality
    hypothesis failed on the supplied box.  Carries the measured witness."""

    def __init__(self, message, infimum=None, witness=None):
        super().__init__(message)
        self.infimum = infimum
        self.witness = witness


class DiagnosticError(ConoflowError):
    """A consistency check on computed data failed; carries the evidence."""

    def __init__(self, message, profile=None):
        super().__init__(message)
        self.profile = profile


class GlancingDiagnosticError(DiagnosticError):
    """The glancing continuation disagreed with its own expansion certificate."""


class OneSidedLimitWarning(UserWarning):
    """A derivative at the interface was resolved by the one-sided convention."""
