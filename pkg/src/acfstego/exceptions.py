"""Exception hierarchy shared by every layer of the package."""


class AcfError(Exception):
    """Base class for all errors raised by acfstego."""


class ConfigError(AcfError, ValueError):
    """Invalid or incomplete steganographic configuration."""


class CalibrationError(ConfigError):
    """Margin calibration failed or produced an unusable value."""


class DegenerateVocabularyError(ConfigError):
    """Vocabulary too small to carry a partition channel."""


class DomainError(AcfError, ValueError):
    """Argument outside the domain of an operation (bad token, bad distribution...)."""


class StreamExhaustedError(AcfError, RuntimeError):
    """The shared pseudorandom stream ran past its counter limit."""


class FramingError(AcfError, ValueError):
    """Block boundaries disagree with the received token sequence."""


class StatisticalPowerError(AcfError, ValueError):
    """Too few samples for a meaningful statistical test."""


class IngestionError(DomainError):
    """Corpus, vocabulary or memory-pool input could not be ingested."""
