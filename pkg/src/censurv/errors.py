"""Exception types.

Every error raised by the package derives from :class:`SurvivalError` and
carries a stable ``code`` string, which the command line maps to exit codes.
"""


class SurvivalError(Exception):
    code = "ERROR"

    def __init__(self, message="", code=None):
        super().__init__(message)
        if code is not None:
            self.code = code

    def __str__(self):
        msg = super().__str__()
        return f"{self.code}: {msg}" if msg else self.code


class DimMismatch(SurvivalError, ValueError):
    code = "DIM_MISMATCH"


class ShapeMismatch(SurvivalError, ValueError):
    code = "SHAPE_MISMATCH"


class IndexOutOfRange(SurvivalError, IndexError):
    code = "INDEX_OUT_OF_RANGE"


class NegativeTime(SurvivalError, ValueError):
    code = "NEGATIVE_TIME"


class OracleScaleExceeded(SurvivalError, ValueError):
    code = "ORACLE_SCALE_EXCEEDED"


class StaleGradients(SurvivalError, RuntimeError):
    code = "STALE_GRADIENTS"


class IncompatibleContext(SurvivalError, ValueError):
    code = "INCOMPATIBLE_CONTEXT"


class Diverged(SurvivalError, RuntimeError):
    code = "DIVERGED"


class ExplanationUnavailable(SurvivalError, RuntimeError):
    code = "EXPLANATION_UNAVAILABLE"


class NoEvents(SurvivalError, ValueError):
    code = "NO_EVENTS"


class NoLabeledPatients(SurvivalError, ValueError):
    code = "NO_LABELED_PATIENTS"


class EmptyDataset(SurvivalError, ValueError):
    code = "EMPTY_DATASET"


class TooFewRecords(SurvivalError, ValueError):
    code = "TOO_FEW_RECORDS"


class IngestError(SurvivalError, ValueError):
    """Raised by the ingest pipelines.

    ``code`` is one of MISSING_LABEL_COLUMNS, UNKNOWN_COLUMN, EMPTY_RECORD,
    MISSING_OUTCOME or MALFORMED_CSV.
    """
    code = "INGEST_ERROR"
