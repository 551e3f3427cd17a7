"""Exception types shared across the package."""


class PrcmarkError(ValueError):
    """Base class for all domain errors."""


class InvalidParams(PrcmarkError):
    """A parameter block violates its invariants."""


class DimensionError(PrcmarkError):
    """Key generation could not reach the required code dimension."""


class LengthError(PrcmarkError):
    """A vector or message has the wrong length."""


class ShapeMismatch(PrcmarkError):
    """Tensor shapes are inconsistent."""


class InvalidSpec(PrcmarkError):
    """An attack spec is malformed or applied to the wrong operation."""


class DuplicateCollision(PrcmarkError):
    """Distinct schedule entries could not be sampled."""


class InvalidConfig(PrcmarkError):
    """An experiment config file is malformed."""


class FormatError(PrcmarkError):
    """A serialized container is malformed."""
