"""Cognitive skill-biased technological change on an estimated skill distribution.

Skills are placed in (manual, cognitive) coordinates. The technology change
raises the marginal product of cognitive skill by d_gamma x_m + d_delta x_c
and leaves manual skill untouched.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence
import numpy as np
from config.settings import AppConfig
from data_classes.decomposition import DecompositionInput, DecompositionResult
from data_classes.errors import InvalidInputError
from data_classes.grid import Grid, MatrixField, ScalarField, VectorField
from data_classes.records import WorkerRecord
from data_classes.technology import TechParams
from services import grid_operators
from services.helmholtz_service import HelmholtzService
from services.inference_service import (infer_skill_arrays, kde_density, records_frame,
                                        silverman_bandwidth, winsorize)

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class CounterfactualResult:
    skills: np.ndarray
    grid: Grid
    density: ScalarField
    technology_change: VectorField
    decomposition: DecompositionResult
    earnings: ScalarField
    earnings_change: ScalarField
    percent_change: ScalarField
    zero_change: np.ndarray
    mode: np.ndarray
    rotation: float


def anchor_earnings_change(potential: ScalarField, gradient: VectorField,
                           f: ScalarField) -> ScalarField:
    """Fix the free constant of w_dot by degree-two homogeneity, w_dot ~ x . grad(w_dot) / 2."""
    homogeneous = 0.5 * np.einsum('ni,ni->n', potential.grid.points, gradient.values)
    shift = np.sum(f.values * (homogeneous - potential.values)) / np.sum(f.values)
    return ScalarField(potential.grid, potential.values + shift)


def zero_crossings(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Nodes where the field is zero or changes sign towards a forward neighbour."""
    flagged = values == 0
    for k in range(grid.dim):
        ahead = grid.forward[k]
        present = ahead >= 0
        crossing = np.zeros(grid.size, dtype=bool)
        crossing[present] = values[present] * values[ahead[present]] < 0
        flagged |= crossing
    return flagged


class CounterfactualService:
    def __init__(self, config: Optional[AppConfig] = None,
                 helmholtz_service: Optional[HelmholtzService] = None):
        self.config = config or AppConfig()
        self.helmholtz_service = helmholtz_service or HelmholtzService(self.config.solver)

    def _skill_grid(self, skills: np.ndarray, n: int) -> Grid:
        """Rectangle covering the winsorized skills with a small margin, kept in x > 0."""
        low, high = skills.min(axis=0), skills.max(axis=0)
        span = np.where(high > low, high - low, np.maximum(np.abs(high), 1.0))
        lower = np.maximum(low - 0.05 * span, 0.5 * low)
        upper = high + 0.05 * span
        return Grid.rectangle(n, bounds=((lower[0], upper[0]), (lower[1], upper[1])))

    def run(self, records: Sequence[WorkerRecord], params: TechParams, gamma_dot: float,
            delta_dot: float, grid_n: Optional[int] = None) -> CounterfactualResult:
        if gamma_dot < 0 or delta_dot < 0:
            raise InvalidInputError(
                f"Rates must be nonnegative, got gamma_dot={gamma_dot}, delta_dot={delta_dot}")
        frame = records_frame(records)
        manual, cognitive = infer_skill_arrays(frame['earnings'].to_numpy(),
                                               frame['q_ratio'].to_numpy(), params)
        calibration = self.config.calibration
        skills = winsorize(np.column_stack([manual, cognitive]),
                           calibration.winsor_lower, calibration.winsor_upper)
        grid = self._skill_grid(skills, grid_n or self.config.grid_n)
        bandwidth = silverman_bandwidth(skills) * calibration.bandwidth_scale
        density = kde_density(skills, grid, bandwidth, self.config.solver.density_floor)

        sigma = params.skill_matrix()
        dsigma = np.array([[0.0, 0.0], [gamma_dot, delta_dot]])
        change = VectorField.linear(grid, dsigma)
        data = DecompositionInput(density=density,
                                  complementarity=MatrixField.constant(grid, sigma, spd=True),
                                  technology_change=change,
                                  psi=self.config.solver.psi,
                                  solver=self.config.solver.method)
        logger.info(f"Counterfactual with gamma_dot={gamma_dot}, delta_dot={delta_dot} "
                    f"on {len(skills)} workers")
        result = self.helmholtz_service.decompose(data)

        earnings = ScalarField(grid, 0.5 * np.einsum('ni,ij,nj->n', grid.points, sigma, grid.points))
        anchored = anchor_earnings_change(result.potential, result.gradient, density)
        percent = ScalarField(grid, 100.0 * anchored.values / earnings.values)
        mode = grid.points[int(np.argmax(density.values))]
        rotation = grid_operators.fitted_rotation(result.reallocation, density, mode)
        logger.info(f"Fitted rotation at the density mode: {rotation:.4e}")
        return CounterfactualResult(skills=skills, grid=grid, density=density,
                                    technology_change=change, decomposition=result,
                                    earnings=earnings, earnings_change=anchored,
                                    percent_change=percent,
                                    zero_change=zero_crossings(percent.values, grid),
                                    mode=mode, rotation=rotation)
