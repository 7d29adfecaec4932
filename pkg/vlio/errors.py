# exception hierarchy for vlio
# ConfigError -> cli exit code 1, DataError -> cli exit code 2


class VlioError(Exception):
    pass


class ConfigError(VlioError):
    """bad configuration value or key, with the yaml location if known"""

    def __init__(self, message, path=None, line=None, field=None):
        self.path = path
        self.line = line
        self.field = field
        self.reason = message
        loc = ''
        if path is not None:
            loc = '%s:' % path
            if line is not None:
                loc += '%d:' % line
            loc += ' '
        if field is not None:
            loc += '%s: ' % field
        super(ConfigError, self).__init__(loc + message)


class DataError(VlioError):
    pass


class FormatError(DataError):
    pass


class IoError(DataError):
    pass


class NonMonotonicTimestamps(DataError):
    pass


class WindowTooShort(DataError):
    pass


class TimestampOutOfRange(DataError):
    pass


class InsufficientSamples(DataError):
    pass


class ZeroRangePoint(DataError):
    pass


class EmptyMap(DataError):
    pass


class SingularCovariance(DataError):
    pass


class DegenerateNeighbors(DataError):
    pass


class InvalidMatch(DataError):
    pass


class NoValidMatches(DataError):
    pass


class OutOfDuration(DataError):
    pass


class WindowUncovered(DataError):
    pass


class NoOverlap(DataError):
    pass
