"""Link-level simulator for progressive-token image transmission.

Images are tokenized into an importance-ordered sequence (key tokens first,
then detail tokens), a channel-budgeted prefix is sent through turbo-coded
QAM over AWGN, and the receiver rebuilds the image from the zero-padded
partial sequence.
"""

from .errors import (
    ConfigError,
    FramingError,
    ImageFormatError,
    InfeasibleBudgetError,
    ProtocolError,
    TokenLinkError,
    TrainingError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "FramingError",
    "ImageFormatError",
    "InfeasibleBudgetError",
    "ProtocolError",
    "TokenLinkError",
    "TrainingError",
]
