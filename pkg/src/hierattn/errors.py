"""Exception types shared across the engine.

The three category bases map onto CLI exit codes: configuration/parse
problems exit 2, data consistency problems exit 3, numeric failures exit 4.
"""


class HierattnError(Exception):
    """Base class for all engine errors."""

    exit_code = 1


class ConfigParseError(HierattnError):
    """Configuration or file-format problem."""

    exit_code = 2


class DataError(HierattnError):
    """Data consistency problem."""

    exit_code = 3


class NumericError(HierattnError):
    """Numeric failure during computation."""

    exit_code = 4


# -- configuration / parsing ------------------------------------------------

class ParseError(ConfigParseError):
    """Malformed input file; message names the file and line."""


class ConfigError(ConfigParseError):
    """Inconsistent or invalid configuration values."""


class VersionError(ConfigParseError):
    """Checkpoint file with an unknown format version."""


class DimMismatch(ConfigParseError):
    """Embedding file line with the wrong number of values."""


# -- data consistency --------------------------------------------------------

class CycleError(DataError):
    """Hierarchy edge set contains a cycle."""


class MultiParentError(DataError):
    """A label has two distinct parents."""


class OrphanError(DataError):
    """A label is unreachable from the root."""


class UnknownLabelError(DataError):
    """A label is not present in the hierarchy."""


class LevelOutOfRange(DataError):
    """Requested level outside 1..depth."""


class DuplicateIdError(DataError):
    """Two corpus records share a document id."""


class EmptyCorpus(DataError):
    """Vocabulary requested for an empty document list."""


class EmptyDataset(DataError):
    """Training or evaluation invoked on an empty dataset."""


class FingerprintError(DataError):
    """Checkpoint was produced against a different hierarchy."""


class UnknownDocumentError(DataError):
    """Requested document id absent from the corpus."""


class NoPositivesError(DataError):
    """Precision-recall curve requested with no positive pairs."""


# -- numeric -----------------------------------------------------------------

class NonFiniteError(NumericError):
    """An operation produced NaN or Inf values."""


class NonFiniteLoss(NumericError):
    """Training loss became NaN or Inf."""


# -- contract violations (no dedicated exit code) ----------------------------

class ShapeMismatch(HierattnError):
    """Operand shapes are incompatible."""


class AllMaskedError(HierattnError):
    """Softmax mask has no unmasked position."""


class EmptyAxis(HierattnError):
    """Reduction over an empty axis."""


class NotScalarError(HierattnError):
    """Backward pass started from a non-scalar node."""
