"""Exception hierarchy. Every error carries a stable ``code`` string."""


class FlowlensError(Exception):
    code = "ERROR"

    def __init__(self, message: str = "", *, stage: str | None = None):
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        msg = super().__str__()
        prefix = f"[{self.stage}] " if self.stage else ""
        return f"{prefix}{self.code}: {msg}" if msg else f"{prefix}{self.code}"


class EmptyInputError(FlowlensError):
    code = "EMPTY_INPUT"


class InvalidConfigError(FlowlensError):
    code = "INVALID_CONFIG"


class InvalidParamsError(FlowlensError):
    code = "INVALID_PARAMS"


class DegenerateSampleError(FlowlensError):
    code = "DEGENERATE_SAMPLE"


class UnsupportedValuesError(FlowlensError):
    code = "UNSUPPORTED_VALUES"


class NoConvergenceError(FlowlensError):
    code = "NO_CONVERGENCE"


class EmptySampleError(FlowlensError):
    code = "EMPTY_SAMPLE"


class NoFamilyFitsError(FlowlensError):
    code = "NO_FAMILY_FITS"


class TooFewEntitiesError(FlowlensError):
    code = "TOO_FEW_ENTITIES"


class GraphIOError(FlowlensError):
    code = "IO_ERROR"


class AllZeroError(FlowlensError):
    code = "ALL_ZERO"


class InvalidKLError(FlowlensError):
    code = "INVALID_K_L"


class EmptyClusterError(FlowlensError):
    code = "EMPTY_CLUSTER_UNRECOVERABLE"


class UnassignedEntityError(FlowlensError):
    code = "UNASSIGNED_ENTITY"


class MissingModelError(FlowlensError):
    code = "MISSING_MODEL"


class StageError(FlowlensError):
    """Wraps any failure raised inside a pipeline stage."""

    code = "STAGE_FAILED"
