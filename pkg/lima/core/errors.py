"""
Exception hierarchy shared across lima.

Codec errors are re-exported by lima.protocol.codec.
"""


class LimaError(Exception):
    """Base class for every error raised by lima."""


class ConfigError(LimaError):
    """Configuration file missing, unreadable, or failing validation."""


class DisconnectedMesh(LimaError):
    """The LR/LG mesh is not connected at the Standard Transmission Profile."""


class CalibrationError(LimaError):
    """Path-loss calibration does not put the SF12 range inside the accepted band."""


class OutOfRange(LimaError):
    """An argument lies outside the domain an operation accepts."""


# Codec errors, re-exported by lima.protocol.codec

class CodecError(LimaError):
    """A byte sequence could not be encoded or decoded."""


class InvalidOptLen(CodecError):
    """Header options length does not match the header type rules."""


class Truncated(CodecError):
    """A LIMA frame is shorter than its header claims."""


class MalformedLorawan(CodecError):
    """A frame claimed to be LoRaWAN is too short or inconsistent."""


class UnknownDr(CodecError):
    """Data rate index not present in the regional plan."""


class NoHistory(LimaError):
    """No SNR record exists yet for the requested device."""
