"""Exception hierarchy shared across the engine.

Everything raised on purpose by this package derives from ArenaError so
callers can catch engine failures without swallowing programming errors.
"""

from __future__ import annotations


class ArenaError(Exception):
    """Base class for all errors raised by this package."""


class GameValidationError(ArenaError):
    """A game definition violates a structural invariant."""


class TieError(ArenaError):
    """A preference query hit a tie the caller must resolve explicitly."""


class PromptParseError(ArenaError):
    """A completion could not be mapped onto one of the offered options."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class MoveError(ArenaError):
    """An agent failed to produce a legal move for the current round."""

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


class ProviderError(ArenaError):
    """Base class for completion-provider failures."""


class TransportError(ProviderError):
    """A transient network or server failure; safe to retry."""


class RateLimitedError(TransportError):
    """The provider asked us to slow down; retried with backoff."""


class ConfigurationError(ArenaError):
    """A non-retryable setup problem: bad credentials, bad request,
    missing provider, malformed config file."""


class OfflineViolationError(ArenaError):
    """A network-backed provider was requested while running offline."""


class InvalidTranscriptError(ArenaError):
    """A metric was requested for a transcript that did not complete."""


class GridError(ArenaError):
    """A tournament grid specification is unusable."""
