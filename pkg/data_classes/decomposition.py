from dataclasses import dataclass, field
from typing import Any, Dict, Optional
import numpy as np
from data_classes.errors import DimensionError, InvalidInputError
from data_classes.grid import Grid, MatrixField, ScalarField, VectorField

SOLVERS = ("penalized", "direct")


@dataclass(eq=False)
class DecompositionInput:
    density: ScalarField
    complementarity: MatrixField
    technology_change: VectorField
    density_change: Optional[ScalarField] = None
    psi: Optional[float] = None
    solver: str = "penalized"
    tolerance: Optional[float] = None
    max_iterations: Optional[int] = None

    def __post_init__(self):
        grid = self.density.grid
        grid.check_same(self.complementarity.grid)
        grid.check_same(self.technology_change.grid)
        if self.density_change is not None:
            grid.check_same(self.density_change.grid)
        if self.solver not in SOLVERS:
            raise InvalidInputError(f"Unknown solver '{self.solver}', expected one of {SOLVERS}")
        if self.psi is not None and not self.psi > 0:
            raise InvalidInputError(f"Penalty weight must be positive, got {self.psi}")
        if self.tolerance is not None and not self.tolerance > 0:
            raise InvalidInputError(f"Solver tolerance must be positive, got {self.tolerance}")
        values = self.density.values
        if not np.all(np.isfinite(values)) or np.any(values < 0) or values.max() <= 0:
            raise InvalidInputError("Worker density must be finite, nonnegative and not identically 0")
        if not np.all(np.isfinite(self.technology_change.values)):
            raise InvalidInputError("Technology change contains non-finite values")
        interior = grid.interior_axis_counts()
        if min(interior) < 3:
            raise DimensionError(f"Need at least 3 interior nodes per axis, got {interior}")

    @property
    def grid(self) -> Grid:
        return self.density.grid


@dataclass
class Diagnostics:
    orthogonality: float
    divergence_residual: float
    max_boundary_flux: float
    curl_residual: float
    output_gain: float
    # product of the norms of v and r in the solver's quadrature
    orthogonality_scale: float = 0.0

    @property
    def orthogonality_ratio(self) -> float:
        if self.orthogonality_scale <= 0:
            return 0.0 if self.orthogonality == 0 else float('inf')
        return abs(self.orthogonality) / self.orthogonality_scale

    def to_json_data(self) -> Dict[str, float]:
        return {
            'orthogonality': self.orthogonality,
            'divergence_residual': self.divergence_residual,
            'max_boundary_flux': self.max_boundary_flux,
            'curl_residual': self.curl_residual,
            'output_gain': self.output_gain,
        }


@dataclass(eq=False)
class DecompositionResult:
    gradient: VectorField
    potential: ScalarField
    reallocation: VectorField
    diagnostics: Diagnostics
    method: str
    label: str = "reallocation"
    density: Optional[ScalarField] = None
    solver_info: Dict[str, Any] = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.gradient.grid
