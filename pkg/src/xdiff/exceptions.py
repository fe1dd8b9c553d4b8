"""Exception hierarchy for xdiff."""


class XdiffError(Exception):
    """Base class for all package errors."""


class BoundaryComposition(XdiffError, ValueError):
    """A transform that needs strictly interior fractions got a boundary point."""


class InvalidParameter(XdiffError, ValueError):
    pass


class InvalidReaction(XdiffError, ValueError):
    pass


class MissingReaction(XdiffError, ValueError):
    pass


class MissingReducedMobility(XdiffError, ValueError):
    pass


class WrongModel(XdiffError, ValueError):
    pass


class SamplerExhausted(XdiffError, RuntimeError):
    pass


class NewtonDiverged(XdiffError, RuntimeError):
    """Raised when the implicit step fails to reach the residual tolerance.

    ``step_index`` is filled in by :func:`xdiff.solver.simulate` when the
    failure happens inside a run.
    """

    def __init__(self, message, residual=float("nan"), step_index=None):
        super().__init__(message)
        self.residual = residual
        self.step_index = step_index


class BoundaryReference(XdiffError, ValueError):
    pass


class DegenerateSeries(XdiffError, ValueError):
    pass


class ConfigMismatch(XdiffError, ValueError):
    pass


class ConfigError(XdiffError, ValueError):
    """Invalid run configuration. ``line`` points into the config text when known."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
