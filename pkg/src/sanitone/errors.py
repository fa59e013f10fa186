"""Exception hierarchy shared by every stage of the toolkit."""


class SanitoneError(Exception):
    """Base class for all errors raised by this package."""


# signal io
class FormatError(SanitoneError):
    pass


class UnsupportedChannels(SanitoneError):
    pass


class EmptySignal(SanitoneError):
    pass


# vocoder
class TooShort(SanitoneError):
    pass


class FrameMismatch(SanitoneError):
    pass


class InvalidAnalysis(SanitoneError):
    pass


# features
class NonPositiveEnvelope(SanitoneError):
    pass


class InsufficientVoicedFrames(SanitoneError):
    pass


class DimensionMismatch(SanitoneError):
    pass


# neural net / cyclegan
class ShapeMismatch(SanitoneError):
    pass


class InvalidArch(SanitoneError):
    pass


class EmptyCorpus(SanitoneError):
    pass


class VersionMismatch(SanitoneError):
    pass


class CorruptFile(SanitoneError):
    pass


# pipeline
class MalformedName(SanitoneError):
    pass


class InfeasibleSplit(SanitoneError):
    pass


class FilterConfigMismatch(SanitoneError):
    pass


# evaluation
class EmptyReference(SanitoneError):
    pass


class EmptyScores(SanitoneError):
    pass


class DegenerateTrainingSet(SanitoneError):
    pass


class TooFewVoicedFrames(SanitoneError):
    pass


class AlignmentError(SanitoneError):
    pass


# configuration
class ParseError(SanitoneError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ValidationError(SanitoneError):
    def __init__(self, key, message=""):
        super().__init__(f"{key}: {message}" if message else key)
        self.key = key
