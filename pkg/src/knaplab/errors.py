"""Exception hierarchy shared across the laboratory.

Every error raised by knaplab derives from :class:`KnaplabError` so callers
can catch the whole family; most are also ValueError subclasses because they
signal bad inputs rather than broken state.
"""


class KnaplabError(Exception):
    """Base class for all knaplab errors."""


class ParameterError(KnaplabError, ValueError):
    """Invalid argument bounds or configuration."""


class DegenerateInputError(KnaplabError, ValueError):
    """Input has no variation where variation is required (e.g. zero variance)."""


class SizeError(KnaplabError, ValueError):
    """Problem size outside the supported range."""


class FeasibilityError(KnaplabError, ValueError):
    """A solution violates the capacity constraint of its instance."""


class DataError(KnaplabError, ValueError):
    """Training data is empty, inconsistent, or carries infeasible labels."""


class ShapeError(KnaplabError, ValueError):
    """Model and instance dimensions do not match."""


class CalibrationError(KnaplabError, RuntimeError):
    """Bisection could not reach the requested target utility."""


class PreconditionError(KnaplabError, ValueError):
    """A stated precondition (e.g. side-consistency of a CCF) does not hold."""


class DegenerateClusterError(KnaplabError, ValueError):
    """Fewer than two clusters in a cluster-robust estimate."""


class FormatError(KnaplabError, ValueError):
    """A serialized artifact does not match its documented schema."""


class SessionError(KnaplabError):
    """Base class for study-service errors."""


class UnknownSessionError(SessionError):
    """Session token does not exist."""


class PhaseError(SessionError):
    """Operation not valid in the session's current phase."""


class ConflictError(SessionError):
    """Attempt to re-settle an already settled problem."""


class PersistenceError(SessionError):
    """The append-only event log could not be written."""


class EmptyDatasetError(KnaplabError, ValueError):
    """An export filter matched no trials."""
