"""Exception taxonomy shared across the package."""


class FreqFlowError(Exception):
    """Base class for all errors raised by freqflow."""


class DimensionError(FreqFlowError):
    """Array dimensions are invalid or inconsistent."""


class NumericError(FreqFlowError):
    """Non-finite values or numerically invalid state."""


class ParameterError(FreqFlowError):
    """A scalar argument is outside its legal range."""


class SymmetryViolationError(FreqFlowError):
    """Inverse transform produced an imaginary residual above tolerance."""


class InputError(FreqFlowError):
    """Invalid input data (empty set, bad label, ...)."""


class ConfigError(FreqFlowError):
    """Invalid model or training configuration."""


class CheckpointError(FreqFlowError):
    """Checkpoint file is malformed or incompatible."""


class FormatError(FreqFlowError):
    """Image file is malformed (bad header, wrong maxval, short payload)."""


class AnalysisError(FreqFlowError):
    """Diagnostic computation hit a degenerate case."""
