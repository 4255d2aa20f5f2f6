from typing import Optional


class HarnackLabException(Exception):
    ...


class InvalidArgumentException(HarnackLabException):
    ...


class EmptyDomainException(HarnackLabException):
    ...


class InsufficientResolutionException(HarnackLabException):
    ...


class InvalidExperimentException(HarnackLabException):
    ...


class NumericalFailureException(HarnackLabException):
    def __init__(
        self, message: str, residual: Optional[float] = None, iterations: Optional[int] = None
    ):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
