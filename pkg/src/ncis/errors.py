"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Operands have incompatible shapes."""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's preconditions."""


class FormatError(ValueError):
    """A file does not conform to its on-disk format."""


class DegenerateVarianceError(ValueError):
    """A statistic is undefined because the sample variance is (near) zero."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss or gradient."""
