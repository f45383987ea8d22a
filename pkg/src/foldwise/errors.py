"""Exception hierarchy shared by all foldwise modules.

The CLI maps these onto process exit codes: input/schema problems exit 1,
argument/config problems exit 2, degenerate data exits 3.
"""


class FoldwiseError(Exception):
    """Base class for all errors raised by foldwise."""


class SchemaError(FoldwiseError):
    """An input file does not match its declared schema (header, row shape, ids)."""


class VocabularyError(SchemaError):
    """A label in an input file is not part of the configured class vocabulary."""


class ValidationError(FoldwiseError):
    """A value in an input violates a range or consistency rule (e.g. row sums)."""


class AlignmentError(FoldwiseError):
    """Two inputs that must share sample ids / vocabulary do not."""


class FormatError(FoldwiseError):
    """A binary file is malformed (bad magic, version, dtype, or truncation)."""


class ProtocolError(FoldwiseError):
    """An external predictor invocation failed or returned a malformed reply."""


class ArgumentError(FoldwiseError):
    """An operation was called with invalid arguments or configuration."""


class DegenerateDataError(FoldwiseError):
    """The data cannot support the requested operation (e.g. single-class labels)."""
