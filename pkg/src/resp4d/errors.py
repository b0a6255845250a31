"""Exception hierarchy shared across the package.

Validation problems (malformed datasets, inconsistent inputs) and processing
problems (tracking/matching failures) are kept apart so the CLI can map them
to distinct exit codes.
"""


class Resp4dError(Exception):
    """Base class for everything raised on purpose by this package."""


class ValidationError(Resp4dError):
    """Input data violates a structural invariant (bad dataset, bad config)."""


class DatasetIOError(Resp4dError):
    """A dataset file is missing, unreadable, or truncated."""


class ProcessingError(Resp4dError):
    """A pipeline stage could not produce a usable result."""


class DegenerateTemplateError(ProcessingError):
    """Template has no usable structure for the requested measure."""


class TrackingError(ProcessingError):
    """A vessel could not be followed through a sequence."""
