"""Exception hierarchy for skfcpd."""


class SkfcpdError(Exception):
    """Base class for all skfcpd errors."""


class InvalidInputError(SkfcpdError, ValueError):
    """Invalid argument: bad grid, out-of-range parameter, malformed series."""


class DataError(SkfcpdError):
    """Input data cannot be parsed or violates the documented schema."""


class NumericalError(SkfcpdError):
    """Numerical conditioning failure, e.g. a predictive variance below floor."""


class CalibrationError(SkfcpdError):
    """Knob calibration failed, e.g. the bisection bracket does not contain the target."""


class EstimationError(SkfcpdError):
    """Likelihood maximization failed to produce a finite optimum."""
