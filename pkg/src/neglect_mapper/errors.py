"""Exception taxonomy shared across the package.

Everything raised on purpose derives from NeglectMapperError so callers can
catch one base class.  ValidationError covers bad input data and bad
configuration; NumericalError covers linear-algebra breakdown that survived
jitter escalation.
"""


class NeglectMapperError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(NeglectMapperError):
    """Invalid input data or configuration.

    When the offending value maps to a named field (config parsing, API
    payloads) the field name is attached so callers can report it.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class PreconditionError(ValidationError):
    """An operation was called with arguments outside its contract."""


class OutOfDomainError(ValidationError):
    """A query point lies outside the field-of-view rectangle."""


class InvalidMeasurementError(ValidationError):
    """A raw response cannot be turned into a valid measurement."""


class InsufficientDataError(ValidationError):
    """Too few data points for the requested operation."""


class IncompleteTraceError(ValidationError):
    """A gaze trace is missing a channel needed by the operation."""


class UndefinedRocError(ValidationError):
    """ROC analysis needs at least one positive and one negative label."""


class ConfigMismatchError(ValidationError):
    """A persisted session does not match the configuration it claims."""


class NoCandidatesError(NeglectMapperError):
    """Acquisition was asked to choose from an empty candidate set."""


class NoCueAvailableError(NeglectMapperError):
    """No spawn point lies within the cueing band around the border."""


class NoBorderError(NeglectMapperError):
    """Border-dependent analysis found no border points to work with."""


class SessionFinishedError(NeglectMapperError):
    """The session has already finished and cannot advance further."""


class SessionInterruptedError(NeglectMapperError):
    """A responder failed mid-session; the session state stays resumable.

    The partially completed state is attached as ``state``.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class NumericalError(NeglectMapperError):
    """Cholesky factorization failed even at the maximum jitter level."""

    def __init__(self, message, attempted_jitter=None):
        super().__init__(message)
        self.attempted_jitter = attempted_jitter
