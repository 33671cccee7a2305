"""Exception hierarchy shared by all modules."""


class MonoSPDEError(Exception):
    pass


class ConfigurationError(MonoSPDEError, ValueError):
    """Invalid grid, coefficient, plan or run configuration."""


class SizeGuardError(ConfigurationError):
    """Problem exceeds a documented size guard."""


class ProbeError(MonoSPDEError):
    """A probe precondition failed (e.g. all samples degenerate)."""


class NumericalError(MonoSPDEError):
    pass


class StepError(NumericalError):
    """The implicit solve did not reach its residual tolerance."""

    def __init__(self, message, residual=None, rows=None):
        super().__init__(message)
        self.residual = residual
        self.rows = rows


class SimulationError(NumericalError):
    """A step failed even after the maximum number of step halvings."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
