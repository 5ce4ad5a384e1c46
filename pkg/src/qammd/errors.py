"""Exception types raised across the package."""


class QammdError(ValueError):
    """Base class for all package errors."""


class InvalidRateError(QammdError):
    pass


class InvalidPointError(QammdError):
    pass


class DegenerateChannelError(QammdError):
    pass


class InconsistentStatsError(QammdError):
    pass


class RankError(QammdError):
    pass


class FeasibilityError(QammdError):
    pass


class ConfigError(QammdError):
    """Bad simulation or CLI configuration; ``field`` names the culprit."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class CollinearPairError(DegenerateChannelError):
    """Two channels are (numerically) linearly dependent."""
