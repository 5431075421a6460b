"""Exception hierarchy shared across the package.

``DataError`` covers malformed or inconsistent inputs (bad files, broken
invariants); ``StageError`` covers failures raised by analysis stages on
well-formed data (e.g. a degenerate curve). The CLI maps these to distinct
exit codes.
"""

from __future__ import annotations


class RccError(Exception):
    """Base class for all package errors."""


class DataError(RccError):
    """Invalid or inconsistent input data."""


class StageError(RccError):
    """An analysis stage could not produce a result on valid input."""


# -- ingestion / file formats ------------------------------------------

class MissingFileError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class DuplicateIdError(DataError):
    def __init__(self, id_: str):
        self.id = id_
        super().__init__(f"duplicate image id: {id_!r}")


class MixedOutputKindsError(DataError):
    pass


class NonFiniteValueError(DataError):
    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__(f"non-finite value at row {row}, column {col}")


class RaggedRowError(DataError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} has a different number of columns")


class IoError(DataError):
    pass


# -- dimensionality reduction ------------------------------------------

class TooFewSamplesError(StageError):
    pass


class DegenerateDistancesError(StageError):
    pass


# -- clustering ---------------------------------------------------------

class KTooLargeError(StageError):
    pass


class ConstantCurveError(StageError):
    pass


class NoValidConfigurationError(StageError):
    pass


class MinClusterSizeTooLargeError(StageError):
    pass


class TooFewClustersError(StageError):
    pass


# -- heatmaps -----------------------------------------------------------

class LayerNotFoundError(DataError):
    def __init__(self, layer: str):
        self.layer = layer
        super().__init__(f"layer not found: {layer!r}")


class DimensionMismatchError(DataError):
    pass


class EmptyAssignmentError(DataError):
    pass


# -- fault injection ----------------------------------------------------

class DeltaTooLargeError(DataError):
    pass


class MissingKeypointsError(DataError):
    def __init__(self, kind: str, missing: list[str]):
        self.kind = kind
        self.missing = missing
        super().__init__(f"{kind} occlusion requires keypoints: {', '.join(missing)}")


class OutOfBoundsError(DataError):
    pass


class InsufficientCorrectImagesError(DataError):
    def __init__(self, scenario: str, label: str | None, wanted: int, available: int):
        self.scenario = scenario
        self.label = label
        self.wanted = wanted
        self.available = available
        where = "" if label is None else f" for class {label!r}"
        super().__init__(
            f"scenario {scenario!r}{where}: requested {wanted} images but only "
            f"{available} correctly-predicted ones are available"
        )


# -- metrics ------------------------------------------------------------

class NoClustersError(StageError):
    pass


class NoScenariosError(StageError):
    pass


class NothingCoveredError(StageError):
    pass
