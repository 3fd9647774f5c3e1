"""Exception hierarchy shared by the approximation modules."""


class MsqiError(Exception):
    """Base class for all package errors."""


class ConfigError(MsqiError, ValueError):
    """Invalid parameters or configuration."""


class NumericalError(MsqiError):
    """A numerical procedure could not produce a trustworthy result."""


class EmptyNeighborhood(NumericalError):
    """No site lies strictly inside the support ball around a query point."""

    def __init__(self, x, delta, level=None):
        self.x = tuple(float(c) for c in x)
        self.delta = float(delta)
        self.level = level
        where = f" at level {level}" if level is not None else ""
        super().__init__(
            f"empty neighborhood{where}: no site within delta={self.delta:g} "
            f"of x=({', '.join(f'{c:.6g}' for c in self.x)})"
        )


class NonUnisolvent(NumericalError):
    """The local MLS Gram system is singular or too badly conditioned."""

    def __init__(self, x, condition):
        self.x = tuple(float(c) for c in x)
        self.condition = float(condition)
        super().__init__(
            f"neighborhood of x=({', '.join(f'{c:.6g}' for c in self.x)}) is not "
            f"unisolvent (Gram condition estimate {self.condition:.3g})"
        )


class CutLocus(NumericalError):
    """A logarithm was requested outside the injectivity radius."""


class NonConvergence(NumericalError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, residual=float("nan")):
        self.residual = float(residual)
        super().__init__(f"{message} (last residual {self.residual:.3e})")


class MissingValues(NumericalError):
    """An evaluation rectangle is not fully covered by the approximation."""
