"""Error hierarchy shared by the services, tools and the command line."""
from typing import Optional


class InvalidInputError(ValueError):
    """Base class for errors caused by malformed user input."""
    pass


class NumericalError(RuntimeError):
    """Base class for numerical failures inside a solver."""
    pass


class DimensionError(InvalidInputError):
    """Custom exception for field/grid shape mismatches."""
    pass


class UnsupportedDimensionError(DimensionError):
    """Custom exception for operators that only exist in two dimensions."""
    pass


class InvalidTechnologyError(InvalidInputError):
    """Custom exception for complementarity matrices that break the model assumptions."""
    pass


class InvalidRecordError(InvalidInputError):
    """Custom exception for worker records with nonpositive earnings or ratios."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CompatibilityError(InvalidInputError):
    """Custom exception for a distribution change that does not conserve mass."""
    pass


class ScenarioError(InvalidInputError):
    """Custom exception for malformed scenario files."""
    pass


class StartPointError(InvalidInputError):
    """Custom exception for an infeasible calibration start."""
    pass


class SolverDivergenceError(NumericalError):
    """Custom exception for a linear solver that stops before reaching tolerance."""

    def __init__(self, message: str, residual: float, iterations: int = 0):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class AssemblyError(NumericalError):
    """Custom exception for singular or indefinite assembled systems."""
    pass


class NotAGradientError(NumericalError):
    """Custom exception for vector fields with a non-negligible curl."""

    def __init__(self, message: str, curl_residual: float):
        super().__init__(f"{message} (relative curl {curl_residual:.3e})")
        self.curl_residual = curl_residual


class PathBreakdownError(NumericalError):
    """Custom exception for a technology path that loses positive definiteness."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time:.6g}")
        self.time = time
