"""Exception and warning classes raised across the package."""


class DistDiscError(Exception):
    """Base class for all errors raised by distdisc."""

    stage = "internal"


# ingestion -----------------------------------------------------------------

class IngestionError(DistDiscError):
    stage = "ingestion"


class MissingColumn(IngestionError):
    def __init__(self, column):
        super().__init__(f"missing column {column!r}")
        self.column = column


class ParseError(IngestionError):
    def __init__(self, row, column, value):
        super().__init__(f"row {row}: cannot parse {column}={value!r}")
        self.row = row
        self.column = column
        self.value = value


class EmptySide(IngestionError):
    def __init__(self, n_left, n_right):
        super().__init__(
            f"need at least 2 observations on each side of the cutoff "
            f"(left={n_left}, right={n_right})"
        )
        self.n_left = n_left
        self.n_right = n_right


# fitting -------------------------------------------------------------------

class FitError(DistDiscError):
    stage = "fit"


class InsufficientData(FitError):
    pass


class SingularFit(FitError):
    pass


class SingularDesign(FitError):
    pass


class GridMismatch(FitError):
    pass


class EmptyGrid(FitError):
    pass


class OrderTooLarge(FitError):
    pass


class SizeMismatch(FitError):
    pass


class DegenerateNull(FitError):
    """The effect curve is identically zero, so shares are undefined."""


class WeakFirstStage(DistDiscError):
    stage = "first-stage"


# inference -----------------------------------------------------------------

class InferenceError(DistDiscError):
    stage = "inference"


class DegenerateSpectrum(InferenceError):
    pass


class BadDecayParam(InferenceError):
    pass


class NoAnalyticTruth(DistDiscError):
    stage = "simulation"


# warnings ------------------------------------------------------------------

class DistDiscWarning(UserWarning):
    pass


class DensityFloorWarning(DistDiscWarning):
    pass


class SaturationWarning(DistDiscWarning):
    pass


class TruncationSensitivityWarning(DistDiscWarning):
    pass


class SmallBootstrapWarning(DistDiscWarning):
    pass
