"""Exception hierarchy shared across the package."""


class FlowgatError(Exception):
    """Base class for all package errors."""


class DimensionError(FlowgatError):
    """Tensor shapes are incompatible with the requested operation."""


class ParseError(FlowgatError):
    """A trips file row could not be parsed."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ValidationError(FlowgatError):
    """Input data violates a declared bound or invariant."""


class ConfigError(FlowgatError):
    """A run configuration is inconsistent or incomplete."""


class SolverError(FlowgatError):
    """A numerical solver could not produce a solution."""


class TrainingDivergedError(FlowgatError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch, message="non-finite training loss"):
        super().__init__(f"{message} (epoch {epoch}, batch {batch})")
        self.epoch = epoch
        self.batch = batch


class FormatError(FlowgatError):
    """A serialized artifact is corrupt or has an unsupported version."""
