"""Exception and warning types shared across the toolkit."""


class SubgeoError(Exception):
    """Base class for all toolkit errors."""


class DomainError(SubgeoError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ParamError(SubgeoError, ValueError):
    """Model parameters outside their documented range."""


class NonConvergence(SubgeoError, RuntimeError):
    """An iterative numerical routine failed to converge."""


class IntegrabilityError(SubgeoError, RuntimeError):
    """A jump integral or tail quadrature did not meet its error budget."""


class FitError(SubgeoError, RuntimeError):
    """A fit could not be performed (no drift in family, too few points)."""


class SimulationError(SubgeoError, RuntimeError):
    """A simulated state became non-finite."""


class BlowupError(SimulationError):
    """A path exceeded the blowup threshold; used for reporting only."""


class BinningError(SubgeoError, ValueError):
    """Histogram bins do not cover the data sensibly."""


class ConfigError(SubgeoError, ValueError):
    """Schema violation or unresolved tag in an experiment config."""


class VarianceWarning(UserWarning):
    """Monte Carlo standard error is large relative to the estimate."""


class CensoringWarning(UserWarning):
    """More than 1% of paths were censored at the horizon."""


class BurnInWarning(UserWarning):
    """The initial segment of a long path looks non-stationary."""


class RareEventWarning(UserWarning):
    """Too few exceedances to estimate a tail probability."""
