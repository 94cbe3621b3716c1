"""Exception types shared across the package."""


class RewriteDetectError(Exception):
    """Base class for all errors raised by this package."""


class EmptyInput(RewriteDetectError):
    """Raised when text that must be non-blank is empty or whitespace."""


class ParseError(RewriteDetectError):
    """Raised when a file or record does not match its expected format."""


class DuplicateId(RewriteDetectError):
    """Raised when identifiers that must be unique collide."""


class BlankDocument(RewriteDetectError):
    """Raised when a corpus contains documents with blank text."""


class StratumTooSmall(RewriteDetectError):
    """Raised when a split stratum has too few documents to divide."""


class AuthError(RewriteDetectError):
    """Raised on credential rejection by the completion endpoint."""


class RateLimited(RewriteDetectError):
    """Raised when the endpoint keeps refusing with a rate-limit status."""


class TransportError(RewriteDetectError):
    """Raised on network failures or malformed endpoint responses."""


class EmptyCompletion(RewriteDetectError):
    """Raised when the endpoint returns a blank completion."""


class SchemaMismatch(RewriteDetectError):
    """Raised when feature vectors and a model disagree on their schema."""


class DegenerateLabels(RewriteDetectError):
    """Raised when training data does not contain both labels."""


class NonFiniteLoss(RewriteDetectError):
    """Raised when the training loss stops being finite."""


class VersionMismatch(RewriteDetectError):
    """Raised when a persisted artifact declares an unsupported version."""


class OverlapDetected(RewriteDetectError):
    """Raised when sets that must be disjoint share members."""


class MissingVariant(RewriteDetectError):
    """Raised when a required pre-generated rewrite is absent."""


class InsufficientData(RewriteDetectError):
    """Raised when a statistical test receives too few observations."""


class ZeroVariance(RewriteDetectError):
    """Raised when a statistical test receives two constant samples."""
