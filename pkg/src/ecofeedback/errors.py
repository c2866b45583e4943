"""Exception hierarchy shared by the pipeline stages.

``DomainError`` subclasses map to CLI exit code 1, ``ConfigError`` and its
subclasses to exit code 2.
"""


class EcoFeedbackError(Exception):
    """Base class for every error raised by this package."""


class DomainError(EcoFeedbackError):
    pass


class ConfigError(EcoFeedbackError):
    pass


class InsufficientData(DomainError):
    pass


class InvalidK(DomainError):
    pass


class SingleClassData(DomainError):
    pass


class UnlabeledData(DomainError):
    pass


class TooFewSamples(DomainError):
    pass


class EmptyInput(DomainError):
    pass


class SchemaMismatch(DomainError):
    pass


class LengthMismatch(DomainError):
    pass


class VersionMismatch(DomainError):
    pass


class CorruptModel(DomainError):
    pass


class InvalidProfile(ConfigError):
    pass


class FuzzyConfigError(ConfigError):
    pass
