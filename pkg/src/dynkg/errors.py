"""Exception hierarchy shared across the engine.

The CLI maps these onto exit codes: usage errors -> 1, data errors -> 2,
backend errors -> 3.
"""


class DynkgError(Exception):
    """Base class for all engine errors."""


class UsageError(DynkgError):
    """Bad flags, malformed config files, inconsistent options."""


class DataError(DynkgError):
    """Malformed or unusable input data (datasets, fixture files)."""


class QuestionMappingError(DataError):
    """A question matched none of the known question patterns."""


class BackendError(DynkgError):
    """A knowledge-model backend failed or violated its contract."""


class UnknownTokenError(BackendError):
    """Query contained a token outside the table model's vocabulary."""


class DecodeError(BackendError):
    """Decoding could not start (empty vocabulary, no finite-probability token)."""


class RemoteTransportError(BackendError):
    """Network-level failure talking to a remote model server."""


class RemoteProtocolError(BackendError):
    """Remote server response was malformed or violated the wire protocol."""


class RemoteNormalizationError(BackendError):
    """Remote server returned a distribution that does not normalize."""
