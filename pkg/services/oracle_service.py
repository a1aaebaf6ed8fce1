"""Exact discrete assignment used to check the continuous comparative statics."""
import logging
from itertools import permutations
from typing import Optional, Sequence, Tuple
import numpy as np
from scipy.optimize import linear_sum_assignment
from config.settings import OracleConfig
from data_classes.errors import DimensionError
from data_classes.grid import Grid, MatrixField, VectorField
from data_classes.instance import (AssignmentSolution, DiscreteInstance, GainReport,
                                   RearrangementReport)
from data_classes.technology import BilinearTech
from services import grid_operators
from services.helmholtz_service import output_gain
from services.sylvester_service import solve_sylvester

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 8


def sample_uniform_disk(m: int, rng: np.random.Generator, radius: float = 1.0) -> np.ndarray:
    radii = radius * np.sqrt(rng.uniform(size=m))
    angles = 2.0 * np.pi * rng.uniform(size=m)
    return np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])


def brute_force_assignment(output: np.ndarray) -> Tuple[np.ndarray, float]:
    """Best permutation by enumerating all of them."""
    output = np.asarray(output, dtype=float)
    m = output.shape[0]
    if m > ENUMERATION_LIMIT:
        raise DimensionError(f"Enumeration is limited to m <= {ENUMERATION_LIMIT}, got {m}")
    candidates = np.array(list(permutations(range(m))))
    values = output[np.arange(m), candidates].sum(axis=1)
    best = int(np.argmax(values))
    return candidates[best], float(values[best])


class OracleService:
    def __init__(self, config: Optional[OracleConfig] = None):
        self.config = config or OracleConfig()

    def _dual_prices(self, output: np.ndarray, permutation: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Prices supporting an optimal matching, found by Bellman-Ford relaxation.

        Job prices satisfy v[sigma(i)] <= v[j] + Y[i, sigma(i)] - Y[i, j]; worker
        prices follow as w_i = Y[i, sigma(i)] - v[sigma(i)].
        """
        m = output.shape[0]
        matched = output[np.arange(m), permutation]
        prices = np.zeros(m)
        slack = 1e-13 * max(1.0, float(np.abs(output).max()))
        for sweep in range(m + 1):
            bound = (prices[None, :] - output).min(axis=1) + matched
            improved = bound < prices[permutation] - slack
            if not improved.any():
                break
            prices[permutation[improved]] = bound[improved]
        else:
            logger.warning(f"Dual prices still moving after {m + 1} relaxation sweeps")
        logger.debug(f"Dual prices settled after {sweep} sweeps")
        workers = matched - prices[permutation]
        shift = workers.mean()
        return workers - shift, prices + shift

    def solve_assignment(self, instance: DiscreteInstance) -> AssignmentSolution:
        """Maximum-output perfect matching with supporting prices."""
        output = instance.output
        m = instance.size
        if m > self.config.max_instance_size:
            raise DimensionError(f"Instance of size {m} exceeds the limit "
                                 f"{self.config.max_instance_size}")
        rows, cols = linear_sum_assignment(output, maximize=True)
        permutation = np.empty(m, dtype=np.int64)
        permutation[rows] = cols
        total = float(output[rows, cols].sum())
        workers, jobs = self._dual_prices(output, permutation)
        solution = AssignmentSolution(permutation=permutation, total_output=total,
                                      worker_prices=workers, job_prices=jobs)
        if abs(solution.duality_gap) > self.config.dual_tolerance * max(1.0, abs(total)):
            logger.warning(f"Duality gap {solution.duality_gap:.3e} on an instance of size {m}")
        return solution

    def verify_rearrangement_equivalence(self, instance: DiscreteInstance,
                                         perturbed: np.ndarray) -> RearrangementReport:
        """Compare the re-solved optimum with the best rearrangement of the initial matching."""
        perturbed = np.asarray(perturbed, dtype=float)
        initial = self.solve_assignment(instance).permutation
        # entry (i, k): output when worker k takes the job initially held by worker i
        replacement = perturbed[:, initial].T
        rows, replacing = linear_sum_assignment(replacement, maximize=True)
        composed = float(replacement[rows, replacing].sum())
        direct = self.solve_assignment(instance.with_output(perturbed)).total_output
        enumerated = None
        if instance.size <= ENUMERATION_LIMIT:
            enumerated = brute_force_assignment(perturbed)[1]
        report = RearrangementReport(direct_output=direct, composed_output=composed,
                                     rearrangement=[int(k) for k in replacing],
                                     enumerated_output=enumerated)
        logger.debug(f"Rearrangement check: gap {report.gap:.3e}, identity={report.is_identity}")
        return report

    def analytic_gain(self, sigma: np.ndarray, dsigma: np.ndarray,
                      grid_n: Optional[int] = None) -> float:
        """Second-order gain of r = R x under the uniform unit-disk density."""
        grid = Grid.disk(grid_n or self.config.reference_grid_n)
        R = solve_sylvester(BilinearTech(sigma, dsigma))
        return output_gain(VectorField.linear(grid, R), MatrixField.constant(grid, sigma),
                           grid_operators.uniform_density(grid))

    def second_order_gain_check(self, sample: np.ndarray, sigma: np.ndarray, dsigma: np.ndarray,
                                steps: Optional[Sequence[float]] = None,
                                reference: Optional[float] = None) -> GainReport:
        """Per-worker output gained by re-solving the assignment after a change of size t."""
        return self._gain_report([np.asarray(sample, dtype=float)], sigma, dsigma, steps, reference)

    def monte_carlo_gain(self, sigma: np.ndarray, dsigma: np.ndarray, seeds: Sequence[int],
                         sample_size: Optional[int] = None,
                         steps: Optional[Sequence[float]] = None) -> GainReport:
        """Gain check averaged over uniform unit-disk samples, one per seed."""
        m = sample_size or self.config.gain_sample_size
        samples = [sample_uniform_disk(m, np.random.default_rng(seed)) for seed in seeds]
        report = self._gain_report(samples, sigma, dsigma, steps, None)
        report.samples = list(seeds)
        return report

    def _gain_report(self, samples, sigma, dsigma, steps, reference) -> GainReport:
        sigma = np.asarray(sigma, dtype=float)
        dsigma = np.asarray(dsigma, dtype=float)
        steps = [float(t) for t in (steps if steps is not None else self.config.gain_steps)]
        gains = np.zeros(len(steps))
        worst_gap = 0.0
        for sample in samples:
            m = len(sample)
            for index, t in enumerate(steps):
                instance = DiscreteInstance.from_bilinear(sample, sample, sigma + t * dsigma)
                solution = self.solve_assignment(instance)
                frozen = float(np.trace(instance.output))
                gains[index] += (solution.total_output - frozen) / m / len(samples)
                worst_gap = max(worst_gap, abs(solution.duality_gap))
        steps_array = np.asarray(steps)
        denominator = float(np.sum(steps_array ** 4))
        coefficient = float(np.sum(gains * steps_array ** 2) / denominator) if denominator > 0 else 0.0
        if reference is None:
            reference = self.analytic_gain(sigma, dsigma)
        report = GainReport(steps=steps, gains=gains.tolist(), coefficient=coefficient,
                            reference=reference, max_duality_gap=worst_gap)
        logger.info(f"Second-order gain coefficient {coefficient:.4f} vs analytic {reference:.4f}")
        return report
