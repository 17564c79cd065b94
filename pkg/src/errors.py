from typing import Any, List, Optional, Tuple


class ShrinkageError(Exception):
    """Base class for every error raised by the library"""


class DomainError(ShrinkageError, ValueError):
    """Input outside the domain where a formula is defined"""


class ConfigError(ShrinkageError, ValueError):
    """Invalid experiment or command-line configuration"""


class EstimationError(ShrinkageError):
    """A data-driven estimator could not be evaluated"""


class ConvergenceError(ShrinkageError, RuntimeError):
    """An iterative numerical procedure did not converge"""

    def __init__(self, message: str, last_iterate: Any = None,
                 residual: Optional[float] = None, iterations: Optional[int] = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations


class EdgeSearchError(ConvergenceError):
    """No consistent set of spectral edges could be bracketed"""

    def __init__(self, message: str, intervals: List[Tuple[float, float]]):
        super().__init__(message)
        self.intervals = intervals


class QuadratureError(ConvergenceError):
    """Cumulative quadrature of the density missed its tolerance"""

    def __init__(self, message: str, achieved: float):
        super().__init__(message, residual=achieved)
        self.achieved = achieved
