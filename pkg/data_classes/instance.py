from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional
import numpy as np
from data_classes.errors import DimensionError


@dataclass(eq=False)
class DiscreteInstance:
    workers: np.ndarray
    jobs: np.ndarray
    output: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        self.workers = np.array(self.workers, dtype=float)
        self.jobs = np.array(self.jobs, dtype=float)
        self.output = np.array(self.output, dtype=float)
        m = self.output.shape[0]
        if self.output.ndim != 2 or self.output.shape != (m, m):
            raise DimensionError(f"Output matrix must be square, got shape {self.output.shape}")
        if len(self.workers) != m or len(self.jobs) != m:
            raise DimensionError(
                f"Need {m} workers and jobs, got {len(self.workers)} and {len(self.jobs)}")
        if not np.all(np.isfinite(self.output)):
            raise DimensionError("Output matrix contains non-finite entries")

    @classmethod
    def from_output(cls, output: Any, seed: Optional[int] = None) -> 'DiscreteInstance':
        """Instance given only by its output matrix, with index positions as points."""
        output = np.asarray(output, dtype=float)
        positions = np.arange(output.shape[0], dtype=float)[:, None]
        return cls(workers=positions, jobs=positions, output=output, seed=seed)

    @classmethod
    def from_bilinear(cls, workers: np.ndarray, jobs: np.ndarray, matrix: np.ndarray,
                      seed: Optional[int] = None) -> 'DiscreteInstance':
        """Y[i][j] = x_i^T M z_j."""
        workers = np.asarray(workers, dtype=float)
        jobs = np.asarray(jobs, dtype=float)
        return cls(workers=workers, jobs=jobs, output=workers @ np.asarray(matrix) @ jobs.T,
                   seed=seed)

    @classmethod
    def from_json_data(cls, data: Dict[str, Any]) -> 'DiscreteInstance':
        return cls(workers=data['workers'], jobs=data['jobs'], output=data['output'],
                   seed=data.get('seed'))

    def to_json_data(self) -> Dict[str, Any]:
        return {'workers': self.workers.tolist(), 'jobs': self.jobs.tolist(),
                'output': self.output.tolist(), 'seed': self.seed}

    @property
    def size(self) -> int:
        return self.output.shape[0]

    def with_output(self, output: Any) -> 'DiscreteInstance':
        return DiscreteInstance(self.workers, self.jobs, output, self.seed)


@dataclass(eq=False)
class AssignmentSolution:
    permutation: np.ndarray
    total_output: float
    worker_prices: np.ndarray
    job_prices: np.ndarray

    @property
    def duality_gap(self) -> float:
        return float(self.worker_prices.sum() + self.job_prices.sum() - self.total_output)

    def min_slack(self, output: np.ndarray) -> float:
        """Smallest w_i + v_j - Y[i][j]; nonnegative for feasible prices."""
        return float((self.worker_prices[:, None] + self.job_prices[None, :] - output).min())

    def to_json_data(self) -> Dict[str, Any]:
        return {'permutation': self.permutation.tolist(), 'total_output': self.total_output,
                'worker_prices': self.worker_prices.tolist(),
                'job_prices': self.job_prices.tolist(), 'duality_gap': self.duality_gap}


@dataclass
class RearrangementReport:
    direct_output: float
    composed_output: float
    rearrangement: List[int]
    enumerated_output: Optional[float] = None

    @property
    def gap(self) -> float:
        return abs(self.direct_output - self.composed_output)

    @property
    def is_identity(self) -> bool:
        return all(k == i for i, k in enumerate(self.rearrangement))

    def to_json_data(self) -> Dict[str, Any]:
        return {'direct_output': self.direct_output, 'composed_output': self.composed_output,
                'gap': self.gap, 'rearrangement': self.rearrangement,
                'identity': self.is_identity, 'enumerated_output': self.enumerated_output}


@dataclass
class GainReport:
    steps: List[float]
    gains: List[float]
    coefficient: float
    reference: Optional[float] = None
    max_duality_gap: float = 0.0
    samples: List[int] = field(default_factory=list)

    @property
    def relative_error(self) -> Optional[float]:
        if self.reference is None or self.reference == 0:
            return None
        return abs(self.coefficient - self.reference) / abs(self.reference)

    def to_json_data(self) -> Dict[str, Any]:
        return {'steps': self.steps, 'gains': self.gains, 'coefficient': self.coefficient,
                'reference': self.reference, 'relative_error': self.relative_error,
                'max_duality_gap': self.max_duality_gap}
