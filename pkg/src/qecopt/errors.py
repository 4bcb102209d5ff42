"""Exception hierarchy."""


class QecoptError(Exception):
    """Base class for all package errors."""


class DimensionError(QecoptError, ValueError):
    """Operand shapes are incompatible."""


class NotHermitianError(QecoptError, ValueError):
    """A matrix required to be Hermitian is not, within tolerance."""


class NotUnitaryError(QecoptError, ValueError):
    """A matrix required to be unitary (or isometric) is not."""


class ChannelError(QecoptError, ValueError):
    """Invalid Kraus data, e.g. a singular normalisation matrix."""


class SolverError(QecoptError, RuntimeError):
    """An optimisation routine failed to reach its stopping criterion."""


class ConfigError(QecoptError, ValueError):
    """Invalid experiment configuration."""
