"""Exception types shared across the package."""


class DimensionMismatch(ValueError):
    """Operands have incompatible shapes."""


class NotPositiveDefinite(ArithmeticError):
    """A matrix required to be Hermitian positive definite is not."""


class RankDeficient(ArithmeticError):
    """A stacked channel or Gram matrix lost full row rank."""


class NonPositiveDistance(ValueError):
    """Pathloss evaluated at a non-positive distance."""


class DegenerateNormal(ArithmeticError):
    """Normal direction Q X vanished; the manifold point is corrupted."""


class DegenerateDirection(ArithmeticError):
    """Retraction target has non-positive constraint value."""


class BisectionFailed(RuntimeError):
    """Power-multiplier bracket not found within the doubling budget."""


class ConfigError(ValueError):
    """Experiment configuration is invalid; message carries the field path."""
