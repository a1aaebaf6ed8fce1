"""Integrate comparative statics along a path of bilinear technologies.

The assignment is tracked as a linear map T_t, earnings as a quadratic form
W_t. Each explicit step solves for the reallocation generator R_t at the
current worker-worker matrix sym(M_t T_t), then updates
T <- T (I + dt R)^-1 and W <- W + dt W_dot.
"""
import logging
from typing import Optional, Tuple
import numpy as np
from config.settings import AppConfig
from data_classes.decomposition import DecompositionInput
from data_classes.errors import PathBreakdownError
from data_classes.flow import FlowStep, FlowTrajectory, OracleComparison, TechPath
from data_classes.grid import MatrixField, ScalarField, VectorField
from data_classes.instance import DiscreteInstance
from data_classes.technology import BilinearTech
from services.helmholtz_service import HelmholtzService
from services.oracle_service import OracleService
from services.sylvester_service import earnings_slope, solve_sylvester

logger = logging.getLogger(__name__)

# Allowed symmetry defect of M_t T_t grows linearly in t.
DEFECT_RATE = 1e-6


def _symmetric(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def _step_inverse(R: np.ndarray, dt: float) -> np.ndarray:
    """(I + dt R)^-1, written out for 2x2 matrices."""
    step = np.eye(R.shape[0]) + dt * R
    if step.shape == (2, 2):
        (a, b), (c, d) = step
        return np.array([[d, -b], [-c, a]]) / (a * d - b * c)
    return np.linalg.inv(step)


class FlowService:
    def __init__(self, config: Optional[AppConfig] = None,
                 helmholtz_service: Optional[HelmholtzService] = None,
                 oracle_service: Optional[OracleService] = None):
        self.config = config or AppConfig()
        self.helmholtz_service = helmholtz_service or HelmholtzService(self.config.solver)
        self.oracle_service = oracle_service or OracleService(self.config.oracle)

    def _closed_form_rates(self, sigma_ww: np.ndarray, dsigma_ww: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        tech = BilinearTech(sigma_ww, dsigma_ww)
        R = solve_sylvester(tech)
        return R, earnings_slope(tech, R)

    def _grid_rates(self, sigma_ww: np.ndarray, dsigma_ww: np.ndarray,
                    density: ScalarField) -> Tuple[np.ndarray, np.ndarray]:
        """Fit R and W_dot by density-weighted least squares to a grid decomposition."""
        grid = density.grid
        data = DecompositionInput(
            density=density,
            complementarity=MatrixField.constant(grid, sigma_ww),
            technology_change=VectorField.linear(grid, dsigma_ww),
            solver=self.config.solver.method)
        result = self.helmholtz_service.decompose(data)
        points = grid.points
        weights = density.values[:, None]
        moment = (points * weights).T @ points
        R = np.linalg.solve(moment, ((points * weights).T @ result.reallocation.values)).T
        W_dot = np.linalg.solve(moment, ((points * weights).T @ result.gradient.values)).T
        return 0.5 * (R - R.T), _symmetric(W_dot)

    def integrate_flow(self, path: TechPath, density: Optional[ScalarField] = None) -> FlowTrajectory:
        """Explicit first-order stepping of the assignment map and earnings schedule."""
        dt = path.dt
        d = path.dim
        M = path.m0.copy()
        T = path.t0_map.copy()
        W = _symmetric(M @ T)
        cumulative = np.eye(d)
        markers = None if path.markers is None else path.markers.copy()
        regime = "grid" if density is not None else "closed_form"
        trajectory = FlowTrajectory(regime=regime)
        logger.info(f"Integrating a {d}-D path over [0, {path.horizon}] in {path.steps} steps "
                    f"({regime})")

        for k in range(path.steps + 1):
            t = k * dt
            product = M @ T
            defect = float(np.linalg.norm(product - product.T))
            if trajectory.defect_excess_time is None and defect > DEFECT_RATE * t and k > 0:
                trajectory.defect_excess_time = t
                logger.warning(f"Symmetry defect {defect:.3e} at t={t:.4g} exceeds "
                               f"{DEFECT_RATE:.0e} * t; refine the step")
            sigma_ww = _symmetric(product)
            if np.linalg.eigvalsh(sigma_ww)[0] <= 0:
                raise PathBreakdownError("Worker-worker matrix lost positive definiteness", t)
            dsigma_ww = path.rate_at(t) @ T
            if density is None:
                R, W_dot = self._closed_form_rates(sigma_ww, dsigma_ww)
            else:
                R, W_dot = self._grid_rates(sigma_ww, dsigma_ww, density)

            trajectory.steps.append(FlowStep(t=t, M=M.copy(), T=T.copy(), sigma_ww=sigma_ww,
                                             R=R, W_dot=W_dot, W=W.copy(), defect=defect))
            if markers is not None:
                trajectory.markers.append(markers.copy())
            if k == path.steps:
                break

            step = np.eye(d) + dt * R
            T = T @ _step_inverse(R, dt)
            W = _symmetric(W + dt * W_dot)
            cumulative = step @ cumulative
            if markers is not None:
                markers = markers @ step.T
            M = M + dt * path.rate_at(t)

        trajectory.rearrangement = cumulative
        logger.info(f"Flow finished with symmetry defect {trajectory.final.defect:.3e}")
        return trajectory

    def compare_with_oracle(self, trajectory: FlowTrajectory, sample_size: Optional[int] = None,
                            seed: int = 0) -> OracleComparison:
        """Mean distance between the discrete optimal matching and the flow's map at the end."""
        m = sample_size or self.config.oracle.comparison_sample_size
        rng = np.random.default_rng(seed)
        start, final = trajectory.steps[0], trajectory.final
        workers = rng.standard_normal((m, final.T.shape[0]))
        jobs = workers @ start.T.T
        instance = DiscreteInstance.from_bilinear(workers, jobs, final.M, seed=seed)
        solution = self.oracle_service.solve_assignment(instance)
        predicted = workers @ final.T.T
        matched = jobs[solution.permutation]
        displacement = float(np.linalg.norm(matched - predicted, axis=1).mean())
        identity = float(np.mean(solution.permutation == np.arange(m)))
        logger.info(f"Oracle comparison at m={m}: mean displacement {displacement:.4e}")
        return OracleComparison(sample_size=m, seed=seed, mean_displacement=displacement,
                                identity_fraction=identity)
