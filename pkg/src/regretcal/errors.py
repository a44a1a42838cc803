"""Exception hierarchy.

Three families map onto CLI exit codes: configuration problems (2), bad or
insufficient data (3) and numerical failures (4).
"""


class RegretcalError(Exception):
    exit_code = 1


class ConfigError(RegretcalError, ValueError):
    exit_code = 2


class DataError(RegretcalError, ValueError):
    exit_code = 3


class NumericalError(RegretcalError, ArithmeticError):
    exit_code = 4


# -- dataset -----------------------------------------------------------------

class MalformedRow(DataError):
    def __init__(self, line, detail=""):
        self.line = line
        super().__init__(f"malformed row on line {line}" + (f": {detail}" if detail else ""))


class ScoreOutOfRange(DataError):
    def __init__(self, line, value=None):
        self.line = line
        super().__init__(f"score {value!r} on line {line} is outside [0, 1]")


class LabelNotBinary(DataError):
    def __init__(self, line, value=None):
        self.line = line
        super().__init__(f"label {value!r} on line {line} is not 0 or 1")


class InconsistentFeatureDim(DataError):
    pass


class MissingColumn(DataError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"missing required column {column!r}")


class EmptyDataset(DataError):
    def __init__(self, msg="dataset is empty"):
        super().__init__(msg)


class TooFewSamples(DataError):
    pass


class EmptyInput(DataError):
    def __init__(self, msg="input is empty"):
        super().__init__(msg)


class LengthMismatch(DataError):
    pass


class SingleClass(DataError):
    def __init__(self, msg="both classes must be present"):
        super().__init__(msg)


class NoFeatures(DataError):
    def __init__(self, msg="operation requires feature vectors (feature_dim >= 1)"):
        super().__init__(msg)


class FoldOverlap(DataError):
    pass


class EmptyRegion(DataError):
    pass


# -- configuration -----------------------------------------------------------

class DegenerateUtility(ConfigError):
    pass


class ThresholdOutOfRange(ConfigError):
    pass


class ThresholdAtBoundary(ConfigError):
    pass


class NonPositiveBins(ConfigError):
    pass


class InadmissibleSpec(ConfigError):
    pass


class UnsupportedThreshold(ConfigError):
    pass


class TooManyLevels(ConfigError):
    pass


class IncompatibleMap(ConfigError):
    pass


class BinningMismatch(ConfigError):
    pass


class NotMonotone(ConfigError):
    pass


# -- numerical ---------------------------------------------------------------

class NonConvergenceWarning(RuntimeWarning):
    """Iterative fit stopped at its iteration cap; the best iterate was kept."""
