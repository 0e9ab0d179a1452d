"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class LineageError(Exception):
    """Base class for all errors raised by this package."""


# -- corpus ----------------------------------------------------------------


class DuplicateDocId(LineageError):
    """A document with this doc_id is already in the store."""


class InvalidMetadata(LineageError):
    """Document metadata failed validation (year window, discipline registry)."""


# -- embedding -------------------------------------------------------------


class ProviderUnavailable(LineageError):
    """The embedding provider could not be reached after the retry policy."""


class DimensionMismatch(LineageError):
    """A vector's dimension disagrees with the declared corpus dimension."""


class ZeroVector(LineageError):
    """Cannot normalize a vector with zero norm."""


# -- index -----------------------------------------------------------------


class EmptyInput(LineageError):
    """An index cannot be built from zero vectors."""


class InsufficientTrainingData(LineageError):
    """Fewer vectors than coarse-quantizer lists."""


class IndexIOError(LineageError):
    """Reading or writing an index file failed at the OS level."""


class VersionMismatch(LineageError):
    """Index file layout version is not supported by this reader."""

    def __init__(self, found: int, supported: int):
        super().__init__(
            f"index layout version {found} not supported (reader supports {supported})"
        )
        self.found = found
        self.supported = supported


class ChecksumMismatch(LineageError):
    """Index file is corrupt: checksum or size does not match."""


# -- matching --------------------------------------------------------------


class ManifestMismatch(LineageError):
    """Index was built with a different embedder or corpus than the query uses."""


class EmptyFocusBook(LineageError):
    """Every sentence of the focus book was removed by the length filters."""


# -- analytics / reports ---------------------------------------------------


class MissingMetadata(LineageError):
    """A matched document has no usable corpus metadata."""


class UnsupportedFormat(LineageError):
    """Unknown output format, or an input file is not the expected format."""


# -- meaning-representation graphs ------------------------------------------


class GraphSyntaxError(LineageError):
    """Malformed graph notation; carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class DuplicateVariable(LineageError):
    """The same variable is defined twice in one graph."""


class DanglingReference(LineageError):
    """A variable is referenced but never defined."""


class InvalidWeights(LineageError):
    """Ensemble weights must be non-negative and sum to one."""


# -- configuration / service -------------------------------------------------


class ConfigError(LineageError):
    """Bad config file or flag value."""


class ServiceNotReady(LineageError):
    """The endpoint needs a corpus store or index that has not been built."""
