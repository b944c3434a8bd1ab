"""Exception hierarchy shared by all modules."""


class CknError(Exception):
    """Base class for all library errors."""


class AdmissibilityError(CknError):
    """Parameters or nonlinearity violate a hard constraint."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class DomainError(CknError, ValueError):
    """Exponent algebra outside its domain of definition."""


class IntegrabilityError(CknError, ValueError):
    """A singular weight is not integrable at the origin."""


class DegenerateInputError(CknError, ValueError):
    """Input too close to zero to be normalized or classified."""


class GeometryError(CknError):
    """Mountain-pass or linking geometry could not be established."""


class ConvergenceError(CknError):
    """Iteration stopped without meeting its tolerance.

    Carries the last iterate, the last residual norm and the history so
    callers can inspect or resume.
    """

    def __init__(self, message, iterate=None, residual=None, history=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual
        self.history = history if history is not None else []
