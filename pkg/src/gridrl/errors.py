"""Exception hierarchy shared by all gridrl modules.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical failures with 3.
"""


class GridRLError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(GridRLError):
    """Invalid scenario, model or command-line configuration."""


class SpecError(ConfigError):
    """A model, Levy measure or policy specification is inconsistent."""


class PolicySpecError(SpecError):
    """Relaxed density of a policy is not a probability density."""


class NumericalError(GridRLError):
    """A numerical procedure failed or produced a non-finite value."""


class CoefficientError(NumericalError):
    """Model coefficient evaluated to a non-finite value."""


class IntegrandError(NumericalError):
    """Random-measure integrand evaluated to a non-finite value."""


class DivergenceError(NumericalError):
    """State or parameter exceeded its overflow guard."""


class LogDensityError(NumericalError):
    """Relaxed density vanished at an executed action."""


class InputError(ConfigError):
    """Arguments violate an operation's preconditions."""
