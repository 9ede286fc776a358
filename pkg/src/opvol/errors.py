"""Exception types shared across the engine."""


class OpVolError(Exception):
    """Base class for all engine errors."""


class DimensionMismatchError(OpVolError, ValueError):
    """Operands live in spaces of different dimension."""


class NotSelfAdjointError(OpVolError, ValueError):
    """A matrix expected to be symmetric exceeds the symmetry tolerance."""


class NotPSDError(OpVolError, ValueError):
    """A matrix expected to be positive semidefinite has an eigenvalue below -eps_psd."""


class SingularDeterminantError(OpVolError, ArithmeticError):
    """Shifted determinant vanished; the characteristic function is undefined there."""


class QuadratureError(OpVolError, RuntimeError):
    """A quadrature did not stabilise under node doubling."""


class SeriesCapError(OpVolError, RuntimeError):
    """Power-series tail bound not reachable at the configured order cap."""


class CommutationError(OpVolError, ValueError):
    """A required commutation condition between operators does not hold."""


class PositivityViolationError(OpVolError, RuntimeError):
    """A state that is positive by theory failed the PSD check; indicates a bug."""


class ConfigError(OpVolError, ValueError):
    """Experiment configuration is invalid."""
