"""Exception types shared across the sensor pipeline."""


class SensorError(Exception):
    """Base class for all errors raised by this package."""


# --- capture parsing ---

class BadMagic(SensorError):
    """Input does not start with a recognized file magic."""


class PcapngUnsupported(BadMagic):
    """Input is a pcapng file, which this sensor does not read."""


class UnsupportedLinkType(SensorError):
    """Capture uses a link type the parser cannot dissect.

    Carries the stats accumulated before the abort in ``.stats`` (the link
    type lives in the global header, so these are normally all zero).
    """

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


# --- anonymization ---

class LengthMismatch(SensorError):
    """IP address byte length does not match the declared IP version."""


class EntropyUnavailable(SensorError):
    """The OS randomness source could not be read."""


class KeyFileError(SensorError):
    """Key file is missing, malformed, or has an unknown version."""


# --- traffic matrices ---

class KeyMismatch(SensorError):
    """Matrices were built under different anonymization keys."""


class WindowSizeMismatch(SensorError):
    """Matrices were built with different window sizes."""


# --- matrix file codec ---

class MixedKeys(SensorError):
    """A single output file cannot mix matrices from different keys."""


class MixedWindowSizes(SensorError):
    """A single output file cannot mix window sizes."""


class UnknownVersion(SensorError):
    """Matrix file declares a format version this reader does not know."""


class UnknownScheme(SensorError):
    """Matrix file declares an unknown anonymization scheme."""


class CorruptPayload(SensorError):
    """Matrix file block is structurally invalid (deflate or varint failure)."""


class InvariantViolation(SensorError):
    """Decoded data is structurally valid but semantically inconsistent."""


# --- synthetic traffic ---

class InvalidSynthSpec(SensorError):
    """Synthetic workload parameters are out of range."""


# --- CLI / daemon ---

class ConfigError(SensorError):
    """Sensor configuration file is missing required keys or has bad values."""


class JournalError(SensorError):
    """Watch-mode journal file cannot be parsed."""
