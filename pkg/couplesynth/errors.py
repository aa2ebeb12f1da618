"""
Exception hierarchy for couplesynth
"""
from typing import Optional


class CoupleSynthError(Exception):
    """Base class for every error raised by couplesynth"""


class ParseError(CoupleSynthError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        """
        Syntax or scoping error in a .cpl source

        Args:
            message: Human readable description
            line: 1-based line of the offending token, if known
            column: 1-based column of the offending token, if known
        """
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class CheckError(CoupleSynthError):
    """Static discipline violation: SSA, loop shape, typing, dist inputs"""


class TransformError(CoupleSynthError):
    """A program rewrite was asked for outside its supported shape"""


class EncodingError(CoupleSynthError):
    """A program or property cannot be encoded into the formula language"""


class OracleError(CoupleSynthError):
    """The exact interpreter hit an undefined or unsupported situation"""


class UnrollBudgetError(OracleError):
    def __init__(self, message: str, residual=None):
        self.residual = residual
        super().__init__(message)


class SolverUnavailableError(CoupleSynthError):
    """No usable SMT backend could be started"""


class SoundnessError(CoupleSynthError):
    """The solver proved a property that the exact oracle refutes"""


class TaskError(CoupleSynthError):
    """Malformed property header, oracle binding or task description"""
