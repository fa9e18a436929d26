"""Exception and warning types shared across the package."""


class NsgaussError(Exception):
    """Base class for all package errors."""


class DomainError(NsgaussError, ValueError):
    """An argument lies outside the domain of a formula."""


class InstabilityError(NsgaussError, ValueError):
    """A process specification is not stable / not contracting."""


class ContractionError(InstabilityError):
    """The threshold-AR contraction coefficient is not below one."""


class SingularityError(NsgaussError, ArithmeticError):
    """A matrix that must be invertible is (numerically) singular."""


class SingularDesignError(SingularityError):
    """Local least-squares design matrix cannot be inverted."""


class NotPSDError(NsgaussError, ValueError):
    """A matrix is not positive semidefinite within tolerance."""


class AsymmetryError(NsgaussError, ValueError):
    """A matrix that must be symmetric is not."""


class UnavailableCoefficientError(NsgaussError, IndexError):
    """Requested a coefficient lag that is not stored."""


class DivergenceError(NsgaussError, ArithmeticError):
    """A fitted tail is not summable."""


class RankDeficiencyError(NsgaussError, ValueError):
    """Too few points for a regression."""


class DegenerateSchemeError(NsgaussError, ValueError):
    """A blocking scheme has too few blocks to be useful."""


class BudgetError(NsgaussError, RuntimeError):
    """A Monte-Carlo computation would exceed its operation budget."""


class WindowError(NsgaussError, ValueError):
    """Lag window too large for the sample."""


class ConfigError(NsgaussError, ValueError):
    """Invalid experiment configuration; message starts with the field path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class AConditionWarning(UserWarning):
    """The logarithmic decay exponent A violates its lower bound."""


class NonconvergenceWarning(RuntimeWarning):
    """A Monte-Carlo estimate moved too much when the history was doubled."""


class EigenvalueWarning(RuntimeWarning):
    """Covariance lower-bound condition fails or eigenvalues were clipped."""
