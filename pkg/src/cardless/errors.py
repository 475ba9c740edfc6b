"""Shared exception hierarchy.

Every domain error raised by this package derives from CardlessError so the
gateway can map failures to HTTP responses in one place.  Modules define
more specific subclasses next to the code that raises them when the error is
local to that module.
"""


class CardlessError(Exception):
    """Base class for all errors raised by the cardless package."""


class FormatError(CardlessError, ValueError):
    """Malformed input: wrong length, illegal character, bad framing."""


class AuthenticationError(CardlessError):
    """Credential or MAC verification failed."""


class NotActiveError(CardlessError):
    """Operation requires an active resource (card, session) that is not."""


class RegistryExhaustedError(CardlessError):
    """Could not find a fresh card number within the retry budget."""
