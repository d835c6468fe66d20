"""Exception hierarchy shared across the package.

Every error raised on a documented failure path derives from CrosspathError so
the CLI can map failures to stable exit codes (see crosspath.cli).
"""


class CrosspathError(Exception):
    """Base class for all package errors."""


class DimensionError(CrosspathError):
    """Operand shapes are incompatible with the requested operation."""


class GraphError(CrosspathError):
    """Backward pass requested on a tensor without a live computation graph."""


class DegenerateBatchError(CrosspathError):
    """Batch statistics undefined (train-mode batchnorm on <2 rows)."""


class TrainingDivergedError(CrosspathError):
    """Non-finite loss or gradient encountered during training."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class SchemaError(CrosspathError):
    """A record violates a dataschema invariant."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line


class ParseError(CrosspathError):
    """A file could not be decoded at all."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class SplitError(CrosspathError):
    """Dataset split cannot be constructed (too few instances)."""


class DegenerateSplitError(CrosspathError):
    """Distance-based split lands on the first or last trajectory step."""


class StateError(CrosspathError):
    """Operation requires state that has not been initialised (e.g. unfitted
    normalization, missing norm params on a model)."""


class BuildError(CrosspathError):
    """Model configuration is internally inconsistent."""


class EmptyTargetError(CrosspathError):
    """Loss/metric requested over an all-masked target."""


class ProtocolError(CrosspathError):
    """Experiment protocol violated (e.g. test split consumed twice)."""


class GenerationError(CrosspathError):
    """Synthetic generator failed to produce a valid crossing."""


class ConfigError(CrosspathError):
    """Invalid configuration value."""


class SizeError(CrosspathError):
    """Exact enumeration guard exceeded."""
