"""
Error kinds

Every failure the toolkit reports has a stable kind string (written into report
error sections) and a CLI exit code.
"""

from typing import Dict, Optional


class ScalingEvalError(Exception):
    """Base class; anything not more specific is an internal invariant problem"""

    kind = "internal"
    exit_code = 4

    def to_dict(self) -> Dict[str, str]:
        return {"error": self.kind, "message": str(self)}


class InsufficientDataError(ScalingEvalError):
    kind = "insufficient-data"
    exit_code = 2


class DegenerateFitError(ScalingEvalError):
    kind = "degenerate-fit"
    exit_code = 2


class ParameterError(ScalingEvalError, ValueError):
    """An analysis or model parameter outside its valid range"""

    kind = "invalid-parameter"
    exit_code = 2


class InputFormatError(ScalingEvalError):
    """Malformed input: undecodable bytes, bad treebank, bad point file"""

    kind = "input-format"
    exit_code = 3

    def __init__(self, message: str, path: Optional[str] = None,
                 offset: Optional[int] = None, tree_index: Optional[int] = None):
        self.path = path
        self.offset = offset
        self.tree_index = tree_index
        details = []
        if path is not None:
            details.append(f"path={path}")
        if offset is not None:
            details.append(f"byte offset {offset}")
        if tree_index is not None:
            details.append(f"tree {tree_index}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)


class DomainError(ScalingEvalError):
    """A point outside the log domain"""

    kind = "domain"
    exit_code = 3

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        super().__init__(message)


class VocabularyError(ScalingEvalError):
    kind = "vocabulary-mismatch"
    exit_code = 3


class InvariantViolation(ScalingEvalError):
    kind = "invariant-violation"
    exit_code = 4


def error_section(error: Exception) -> Dict[str, str]:
    """Report section for a failed analysis step"""
    if isinstance(error, ScalingEvalError):
        return error.to_dict()
    return {"error": ScalingEvalError.kind, "message": f"{type(error).__name__}: {error}"}


def exit_code_for(kind: str) -> int:
    """Exit code of an error kind as recorded in a report section"""
    for cls in (InsufficientDataError, DegenerateFitError, ParameterError, InputFormatError,
                DomainError, VocabularyError, InvariantViolation):
        if cls.kind == kind:
            return cls.exit_code
    return ScalingEvalError.exit_code
