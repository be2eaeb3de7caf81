from typing import Optional


class LabException(Exception):
    """
    Base error for the lab, shaped like an HTTP exception: every failure
    carries the process exit code the CLI reports and a human readable detail.
    """
    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code

    def __str__(self) -> str:
        return self.detail


class ConfigError(LabException):
    """Invalid configuration, override or CLI usage"""
    exit_code = 2


class ShapeError(LabException):
    """Array shapes do not agree"""
    exit_code = 2


class KeyMismatchError(LabException):
    """Two parameter collections do not share the same names"""
    exit_code = 2


class DomainError(LabException):
    """An argument lies outside the domain an operation is defined on"""
    exit_code = 2


class VerificationFailure(LabException):
    """An identity check of the verify suite failed"""
    exit_code = 3


class DivergenceError(LabException):
    """Training produced a non-finite loss or state"""
    exit_code = 4


class NonFiniteError(DivergenceError):
    """NaN or Inf appeared in a forward or backward pass"""
