"""Exception hierarchy shared by all modules."""


class KDEError(Exception):
    """Base class for every error raised by kdecorrect."""


class DataError(KDEError, ValueError):
    """Input data violates a precondition (missing file, bad column, ...)."""


class NumericalError(KDEError, ArithmeticError):
    """A numerical operation could not be completed."""


class DegenerateSampleError(NumericalError):
    """Sample covariance is numerically singular."""


class PilotUnderflowError(NumericalError):
    """Pilot density vanished at a sample point."""

    def __init__(self, row: int):
        super().__init__(f"pilot underflow: pilot density is zero at row {row}")
        self.row = row


class NoEvidenceError(NumericalError):
    """Query lies so far from the data that every kernel weight underflows."""
