"""Exception hierarchy shared by all modules."""


class TokenLinkError(Exception):
    """Base class for library errors."""


class ConfigError(TokenLinkError, ValueError):
    """Invalid or inconsistent configuration."""


class ProtocolError(TokenLinkError):
    """A transmission-protocol rule was violated (e.g. key tokens missing)."""


class FramingError(TokenLinkError):
    """Bitstream or LLR vector has the wrong length for the requested frame."""


class TrainingError(TokenLinkError, ArithmeticError):
    """Training diverged or produced non-finite values."""


class InfeasibleBudgetError(TokenLinkError):
    """The channel budget cannot carry even the key tokens."""


class ImageFormatError(TokenLinkError, ValueError):
    """Malformed image file."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
