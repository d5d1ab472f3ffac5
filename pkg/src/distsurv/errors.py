"""Exception hierarchy shared across the package.

Three broad families map onto the CLI exit codes: configuration problems
(exit 2), data problems (exit 3), and numeric failures (exit 4).
"""


class DistsurvError(Exception):
    """Base class for all package errors."""


class ConfigError(DistsurvError):
    """Invalid run configuration (bad option values, malformed config file)."""


class DataError(DistsurvError):
    """Invalid or unusable input data."""


class NumericError(DistsurvError):
    """A numeric procedure could not produce a result."""


# dataio
class MalformedRow(DataError):
    pass


class DuplicateObservation(DataError):
    pass


class EmptyFile(DataError):
    pass


class UnknownColumn(DataError):
    pass


# skewnormal
class TooFewObservations(DataError):
    pass


class DegenerateSample(DataError):
    pass


class MissingSampleSize(NumericError):
    pass


class SingularInformation(NumericError):
    pass


# survival
class EmptyDataset(DataError):
    pass


class NoEstimableTimePoints(NumericError):
    pass


class AllReplicatesFailed(NumericError):
    pass


# simulation
class NotPositiveDefinite(ConfigError):
    pass
