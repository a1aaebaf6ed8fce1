"""Skill inference, density estimation and moment-matching calibration.

Earnings follow 2w = alpha x_c^2 + 2 beta x_c x_m + delta x_m^2 and the task
ratio pins x_m / x_c = q, so each (w, q) record identifies one skill pair.
"""
import logging
from typing import List, Optional, Sequence, Tuple
import numpy as np
import pandas as pd
from scipy.optimize import minimize
from config.settings import CalibrationConfig
from data_classes.errors import InvalidInputError, InvalidRecordError, StartPointError
from data_classes.grid import Grid, ScalarField
from data_classes.records import (REFERENCE_MODEL_MOMENTS, CalibrationResult, TargetMoments,
                                  WorkerRecord)
from data_classes.technology import TechParams
from services.grid_operators import normalize_density

logger = logging.getLogger(__name__)

KDE_CHUNK = 256


def infer_skill_arrays(earnings: np.ndarray, ratios: np.ndarray,
                       params: TechParams) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized (x_m, x_c) for arrays of earnings and task ratios."""
    earnings = np.asarray(earnings, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    if np.any(earnings <= 0) or np.any(ratios <= 0):
        raise InvalidRecordError("earnings and task ratios must be positive")
    denominator = params.alpha + 2.0 * params.beta * ratios + params.delta * ratios ** 2
    cognitive = np.sqrt(2.0 * earnings / denominator)
    return ratios * cognitive, cognitive


def infer_skills(record: WorkerRecord, params: TechParams) -> Tuple[float, float]:
    manual, cognitive = infer_skill_arrays(np.array([record.earnings]),
                                           np.array([record.q_ratio]), params)
    return float(manual[0]), float(cognitive[0])


def records_frame(records: Sequence[WorkerRecord]) -> pd.DataFrame:
    if not records:
        raise InvalidInputError("No worker records supplied")
    return pd.DataFrame({
        'occupation': [r.occupation for r in records],
        'earnings': [r.earnings for r in records],
        'q_ratio': [r.q_ratio for r in records],
    })


def skills_table(records: Sequence[WorkerRecord], params: TechParams) -> pd.DataFrame:
    frame = records_frame(records)
    manual, cognitive = infer_skill_arrays(frame['earnings'].to_numpy(),
                                           frame['q_ratio'].to_numpy(), params)
    frame['x_m'] = manual
    frame['x_c'] = cognitive
    return frame


def winsorize(sample: np.ndarray, lower: float = 1.0, upper: float = 99.0) -> np.ndarray:
    """Clamp each column at its empirical lower and upper percentiles."""
    sample = np.asarray(sample, dtype=float)
    if sample.size == 0:
        raise InvalidInputError("Cannot winsorize an empty sample")
    if not 0.0 <= lower < upper <= 100.0:
        raise InvalidInputError(f"Need 0 <= lower < upper <= 100, got ({lower}, {upper})")
    low, high = np.percentile(sample, [lower, upper], axis=0)
    return np.clip(sample, low, high)


def silverman_bandwidth(points: np.ndarray) -> np.ndarray:
    """Per-axis Silverman rule sd_k * (4 / ((d + 2) n))^(1 / (d + 4))."""
    points = np.asarray(points, dtype=float)
    n, d = points.shape
    spread = points.std(axis=0, ddof=1)
    fallback = 1e-3 * max(1.0, float(np.abs(points).max()))
    spread = np.where(spread > 0, spread, fallback)
    return spread * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))


def kde_density(points: np.ndarray, grid: Grid, bandwidth: Optional[Sequence[float]] = None,
                floor_ratio: float = 1e-8) -> ScalarField:
    """Product-Gaussian kernel density on the grid nodes, floored and renormalized."""
    points = np.asarray(points, dtype=float).reshape(len(points), -1)
    if len(points) < 2:
        raise InvalidInputError("Kernel density estimation needs at least 2 points")
    if points.shape[1] != grid.dim:
        raise InvalidInputError(f"Points have dimension {points.shape[1]}, grid has {grid.dim}")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(points)
    bandwidth = np.broadcast_to(np.asarray(bandwidth, dtype=float), (grid.dim,))
    if np.any(bandwidth <= 0):
        raise InvalidInputError(f"Bandwidth must be positive, got {bandwidth.tolist()}")
    logger.debug(f"KDE on {len(points)} points with bandwidth {bandwidth.tolist()}")

    values = np.zeros(grid.size)
    for start in range(0, len(points), KDE_CHUNK):
        block = points[start:start + KDE_CHUNK]
        scaled = (grid.points[:, None, :] - block[None, :, :]) / bandwidth
        values += np.exp(-0.5 * np.sum(scaled ** 2, axis=2)).sum(axis=1)
    values /= len(points) * np.prod(bandwidth) * (2.0 * np.pi) ** (grid.dim / 2.0)
    return normalize_density(ScalarField(grid, values), floor_ratio)


class _MomentEvaluator:
    """Occupation-level log-skill moments for one fixed set of records."""

    def __init__(self, records: Sequence[WorkerRecord]):
        frame = records_frame(records)
        codes, _ = pd.factorize(frame['occupation'], sort=True)
        self.codes = codes
        self.counts = np.bincount(codes).astype(float)
        self.ratios = frame['q_ratio'].to_numpy(dtype=float)
        self.log_ratios = np.log(self.ratios)
        self.log_double_earnings = np.log(2.0 * frame['earnings'].to_numpy(dtype=float))

    def __call__(self, alpha: float, beta: float, delta: float) -> np.ndarray:
        denominator = alpha + 2.0 * beta * self.ratios + delta * self.ratios ** 2
        log_cognitive = 0.5 * (self.log_double_earnings - np.log(denominator))
        log_manual = self.log_ratios + log_cognitive
        manual = np.bincount(self.codes, weights=log_manual) / self.counts
        cognitive = np.bincount(self.codes, weights=log_cognitive) / self.counts
        manual_dev = manual - manual.mean()
        cognitive_dev = cognitive - cognitive.mean()
        return np.array([manual.mean(), cognitive.mean(), np.mean(manual_dev ** 2),
                         np.mean(cognitive_dev ** 2), np.mean(manual_dev * cognitive_dev)])


def occupation_moments(records: Sequence[WorkerRecord], params: TechParams) -> TargetMoments:
    """Mean, population variance and covariance of occupation-mean log skills."""
    evaluator = _MomentEvaluator(records)
    return TargetMoments.from_array(evaluator(params.alpha, params.beta, params.delta))


def synthesize_records(params: TechParams, n_occupations: int, workers_per_occupation: int,
                       seed: int, moments: Optional[TargetMoments] = None,
                       within_sd: float = 0.2) -> List[WorkerRecord]:
    """Synthetic records whose occupation-level log skills have the target moments.

    With three or more occupations the occupation draws are whitened and
    recoloured, so the moments are matched exactly at the true parameters.
    """
    if n_occupations < 1 or workers_per_occupation < 1:
        raise InvalidInputError("Occupation and worker counts must be at least 1")
    target = moments or REFERENCE_MODEL_MOMENTS
    try:
        colour = np.linalg.cholesky(target.covariance())
    except np.linalg.LinAlgError as e:
        raise InvalidInputError("Target log-skill covariance is not positive definite") from e

    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((n_occupations, 2))
    if n_occupations >= 3:
        draws = draws - draws.mean(axis=0)
        whitening = np.linalg.cholesky(draws.T @ draws / n_occupations)
        draws = np.linalg.solve(whitening, draws.T).T
    occupation_logs = target.mean() + draws @ colour.T

    width = max(3, len(str(n_occupations - 1)))
    records = []
    for index, (log_manual, log_cognitive) in enumerate(occupation_logs):
        ratio = float(np.exp(log_manual - log_cognitive))
        noise = rng.normal(0.0, within_sd, size=workers_per_occupation)
        if workers_per_occupation > 1:
            noise = noise - noise.mean()
        cognitive = np.exp(log_cognitive + noise)
        manual = ratio * cognitive
        earnings = 0.5 * (params.alpha * cognitive ** 2 + 2.0 * params.beta * cognitive * manual
                          + params.delta * manual ** 2)
        name = f"occ{index:0{width}d}"
        records.extend(WorkerRecord(occupation=name, earnings=float(w), q_ratio=ratio)
                       for w in earnings)
    logger.debug(f"Synthesized {len(records)} records over {n_occupations} occupations")
    return records


class InferenceService:
    def __init__(self, config: Optional[CalibrationConfig] = None):
        self.config = config or CalibrationConfig()

    def _check_start(self, start: Optional[Sequence[float]]) -> np.ndarray:
        if start is None:
            start = (0.2, 0.02, 0.05)
        alpha, beta, delta = (float(v) for v in start)
        if not np.all(np.isfinite([alpha, beta, delta])) or alpha <= 0 or delta <= 0 \
                or alpha * delta <= beta ** 2:
            raise StartPointError(f"Start point {(alpha, beta, delta)} violates "
                                  f"alpha, delta > 0 and alpha*delta > beta^2")
        return np.array([np.log(alpha), beta, np.log(delta)])

    def calibrate(self, records: Sequence[WorkerRecord], targets: TargetMoments,
                  start: Optional[Sequence[float]] = None,
                  weights: Optional[Sequence[float]] = None) -> CalibrationResult:
        """Nelder-Mead on (log alpha, beta, log delta) minimizing squared moment gaps."""
        evaluator = _MomentEvaluator(records)
        goal = targets.as_array()
        scale = np.ones(len(goal)) if weights is None else np.asarray(weights, dtype=float)
        if scale.shape != goal.shape or np.any(scale < 0):
            raise InvalidInputError(f"Need {len(goal)} nonnegative moment weights")
        barrier = self.config.barrier

        def objective(x: np.ndarray) -> float:
            alpha, beta, delta = np.exp(x[0]), x[1], np.exp(x[2])
            if not np.isfinite(alpha * delta) or alpha * delta <= beta ** 2:
                return barrier
            gap = evaluator(alpha, beta, delta) - goal
            value = float(np.sum(scale * gap ** 2))
            return value if np.isfinite(value) else barrier

        best = self._check_start(start)
        best_value = start_value = objective(best)
        iterations = evaluations = 0
        converged = False
        options = {'maxiter': self.config.max_iterations, 'xatol': self.config.xatol,
                   'fatol': self.config.fatol}
        for attempt in range(self.config.restarts + 1):
            outcome = minimize(objective, best, method='Nelder-Mead', options=options)
            iterations += int(outcome.nit)
            evaluations += int(outcome.nfev)
            improvement = best_value - float(outcome.fun)
            if outcome.fun < best_value:
                best, best_value = outcome.x, float(outcome.fun)
            converged = bool(outcome.success)
            logger.debug(f"Calibration restart {attempt}: objective {outcome.fun:.3e}")
            if improvement <= self.config.fatol:
                break
        if not converged:
            logger.warning("Calibration stopped at its iteration cap")

        params = TechParams(alpha=float(np.exp(best[0])), beta=float(best[1]),
                            delta=float(np.exp(best[2])))
        achieved = TargetMoments.from_array(evaluator(params.alpha, params.beta, params.delta))
        logger.info(f"Calibrated alpha={params.alpha:.4f}, beta={params.beta:.4f}, "
                    f"delta={params.delta:.4f} (objective {best_value:.3e})")
        return CalibrationResult(params=params, moments=achieved, objective=best_value,
                                 iterations=iterations, evaluations=evaluations,
                                 start_objective=start_value, converged=converged)
