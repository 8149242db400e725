"""
Error hierarchy for the HDLSS score bias toolkit.

Every data or specification problem raised by the handlers derives from
DataError so the command layer can map it to a single exit code.
"""
from typing import Optional


class HdlssError(Exception):
    """Base class for all toolkit errors"""


class UsageError(HdlssError):
    """Command-line misuse (unknown target, malformed flag)"""


class DataError(HdlssError, ValueError):
    """Invalid data, specification or degenerate numerical situation"""


class InvalidInput(DataError):
    """Input matrix or argument violates a precondition"""


class InvalidSpec(DataError):
    """Simulation specification violates its invariants"""


class DegenerateSpike(DataError):
    """Generated population has no separable spike part"""


class RankExceeded(DataError):
    """Requested more components than the fit holds"""


class DimensionMismatch(DataError):
    """Row count of new data differs from the fitted dimension"""


class DegenerateSignal(DataError):
    """Signal eigenvalue not separable from the noise level"""


class DegenerateScore(DataError):
    """All leave-one-out scores too small to form a ratio"""


class InvalidKind(DataError):
    """Score matrix kind not accepted by the operation"""


class DegenerateSpectrum(DataError):
    """Repeated spike variances where distinct ones are required"""


class DegenerateInput(DataError):
    """Procrustes input is rank deficient or the solver diverged"""


class ParseError(DataError):
    """
    Malformed CSV input

    :param message: Description of the problem
    :param line_number: 1-based line number in the offending file
    """
    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
