"""Exception types raised by the engine."""


class SlvError(Exception):
    """Base class for every error raised by slvfx."""


class ValidationError(SlvError, ValueError):
    """Inputs are inconsistent or violate a model assumption."""


class NotPSDError(ValidationError):
    def __init__(self, msg: str = "matrix not PSD"):
        super().__init__(msg)


class GridAlignmentError(ValidationError):
    def __init__(self, msg: str = "date not on grid"):
        super().__init__(msg)


class EstimationError(SlvError, RuntimeError):
    """A statistical estimator could not produce a value."""


class CriticalMaturityError(SlvError, ValueError):
    """Requested horizon lies beyond the critical maturity of a bound."""
