"""Exception hierarchy shared across the package."""


class AvgSPDEError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(AvgSPDEError, ValueError):
    pass


class UnsupportedOperationError(AvgSPDEError, NotImplementedError):
    pass


class EstimationError(AvgSPDEError, RuntimeError):
    """A statistical fit or estimator could not produce a usable value."""


class SimulationError(AvgSPDEError, RuntimeError):
    """A path left the region where the dynamics are trustworthy."""


class HypothesisViolation(AvgSPDEError, ValueError):
    """A model spec failed the structural checks required by the averaging theory."""

    def __init__(self, report):
        self.report = report
        failed = ", ".join(c.name for c in report.checks if not c.passed)
        super().__init__(f"model hypotheses violated: {failed}")


class ConfigError(AvgSPDEError, ValueError):
    pass


class InconclusiveResultError(AvgSPDEError, RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
