"""Exception and warning types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration: bad channel lists, fractions, partitions, etc."""


class SizeError(ValueError):
    """Data too small for the requested operation."""


class ParseError(ValueError):
    """Malformed input file; message carries the offending line number."""


class DegenerateChannelError(ValueError):
    """A continuous channel has zero variance."""


class ShapeError(ValueError):
    """Incompatible array shapes in a numeric operation."""


class ContractError(ValueError):
    """An operation was called outside its contract."""


class CapacityError(ValueError):
    """Discrete window exceeds the 64-cell bit-packing capacity."""


class DiscreteDataError(TypeError):
    """A continuous channel was passed to the discrete-only oracle."""


class TrainingDivergedError(RuntimeError):
    """Non-finite loss or gradient during optimization."""

    def __init__(self, message, step=None, checkpoint=None):
        super().__init__(message)
        self.step = step
        self.checkpoint = checkpoint


class SampleAdequacyWarning(UserWarning):
    """Too few samples relative to the observed discrete state space."""
