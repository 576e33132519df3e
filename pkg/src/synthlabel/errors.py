"""Exception types shared across the package."""


class SynthLabelError(Exception):
    """Base class for all package errors."""


class ShapeError(SynthLabelError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ParameterError(SynthLabelError, ValueError):
    """A configuration value or hyperparameter is out of its valid range."""


class DegenerateInputError(SynthLabelError, ValueError):
    """Input is numerically degenerate (e.g. a zero vector fed to cosine similarity)."""


class NonFiniteError(SynthLabelError, ArithmeticError):
    """An operation produced NaN or Inf."""


class DivergedError(SynthLabelError, ArithmeticError):
    """A training loop produced a non-finite or exploding loss."""


class ConvergenceError(SynthLabelError, ArithmeticError):
    """An iterative solver hit its iteration cap before meeting its tolerance."""


class ProvenanceError(SynthLabelError, ValueError):
    """Artifacts from different runs/configs were combined without --force."""


class FormatError(SynthLabelError, ValueError):
    """A file does not conform to its declared on-disk format."""


class MissingArtifactError(SynthLabelError, FileNotFoundError):
    """A pipeline stage input has not been produced yet."""


class LockError(SynthLabelError, RuntimeError):
    """Another process holds the output-directory lock."""
