"""Exception hierarchy shared by all streamqoe modules."""


class QoEError(Exception):
    """Base class for every error raised by streamqoe."""


# har_ingest
class MalformedHar(QoEError, ValueError):
    pass


class NegativeTiming(QoEError, ValueError):
    pass


class NoSegmentsFound(QoEError, LookupError):
    pass


# stall_engine
class MissingDurations(QoEError, ValueError):
    pass


class NonMonotoneArrivals(QoEError, ValueError):
    pass


class EmptyTrace(QoEError, ValueError):
    pass


class BadStallSyntax(QoEError, ValueError):
    def __init__(self, clause, message=None):
        self.clause = clause
        super().__init__(message or f"bad stalling clause: {clause!r}")


# quality_model
class UnsupportedMode(QoEError, ValueError):
    pass


class ExternalToolFailure(QoEError, RuntimeError):
    pass


class SchemaMismatch(QoEError, ValueError):
    pass


# net_emulator
class ProfileSyntaxError(QoEError, ValueError):
    def __init__(self, lineno, message):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class MissingDirection(ProfileSyntaxError):
    pass


class DegenerateProfile(QoEError, ValueError):
    pass


# dataset_store
class OutOfRange(QoEError, ValueError):
    pass


class HeaderMismatch(QoEError, ValueError):
    pass


class RowParseError(QoEError, ValueError):
    def __init__(self, lineno, message):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


# feature_lab
class NotCleaned(QoEError, ValueError):
    pass


class TooFewRows(QoEError, ValueError):
    pass


# learner
class SingularDesign(QoEError, ValueError):
    pass


class EmptyTrain(QoEError, ValueError):
    pass


class FeatureMismatch(QoEError, ValueError):
    pass


class LengthMismatch(QoEError, ValueError):
    pass
