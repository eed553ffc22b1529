"""Exception types shared across the library."""


class DialDistillError(Exception):
    """Base class for all library errors."""


class ShapeError(DialDistillError):
    """Operands have incompatible shapes or an invalid axis was given."""


class ContractError(DialDistillError):
    """A caller violated an operation's precondition."""


class NumericError(DialDistillError):
    """A computation produced NaN or Inf values."""


class VocabularyError(DialDistillError):
    """A token id is outside the vocabulary."""


class DataError(DialDistillError):
    """Input data is empty, too small, or otherwise unusable."""


class CheckpointFormatError(DialDistillError):
    """A checkpoint file is corrupted or has an unknown format."""
