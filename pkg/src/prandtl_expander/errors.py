"""Exception types shared across the solver pipeline.

Each class maps to one failure mode of a pipeline stage; solver drivers
catch ``SolverError`` to distinguish numerical failures (CLI exit 3) from
configuration rejections (``SpecRejected``, CLI exit 2).
"""


class SpecRejected(ValueError):
    """A hard invariant of the problem data failed beyond tolerance."""

    def __init__(self, check: str, message: str = ""):
        self.check = check
        super().__init__(f"REJECT_SPEC[{check}]: {message}" if message else f"REJECT_SPEC[{check}]")


class SolverError(RuntimeError):
    """Base class for numerical failures inside a solve."""


class GridTooSmall(SolverError):
    pass


class SingularSystem(SolverError):
    pass


class StepDiverged(SolverError):
    pass


class PositivityLost(SolverError):
    pass


class NonMonotoneMap(SolverError):
    pass


class DomainTooShort(SolverError):
    pass


class StationSingular(SolverError):
    pass


class PositivityViolated(SolverError):
    pass


class GridMismatch(SolverError):
    pass


class ParityConflict(SolverError):
    pass


class NewtonDiverged(SolverError):
    pass
