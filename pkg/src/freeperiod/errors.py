"""Exception hierarchy shared by every stage of the pipeline."""


class FreePeriodError(Exception):
    """Base class; ``stage`` names the pipeline stage that raised."""

    stage = "core"

    def __init__(self, message, stage=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage

    def __str__(self):
        return f"[{self.stage}] {super().__str__()}"


class DomainError(FreePeriodError, ValueError):
    stage = "geometry"


class GeometryError(FreePeriodError):
    stage = "geometry"


class PotentialError(FreePeriodError):
    stage = "potential"


class HomologyError(FreePeriodError):
    stage = "homology"


class ShapeError(FreePeriodError, ValueError):
    stage = "loops"


class RangeError(FreePeriodError, OverflowError):
    stage = "action"


class LinkingError(FreePeriodError):
    stage = "linking"


class SolverError(FreePeriodError):
    stage = "solver"


class OracleError(FreePeriodError):
    stage = "verify"


class ConfigError(FreePeriodError):
    stage = "config"
