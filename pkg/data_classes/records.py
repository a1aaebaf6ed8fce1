from dataclasses import dataclass
from typing import Any, Dict, Sequence
import numpy as np
from data_classes.errors import InvalidInputError, InvalidRecordError
from data_classes.technology import TechParams

MOMENT_NAMES = (
    "mean_log_manual_skill",
    "mean_log_cognitive_skill",
    "variance_log_manual_skill",
    "variance_log_cognitive_skill",
    "covariance_log_skills",
)


@dataclass(frozen=True)
class WorkerRecord:
    occupation: str
    earnings: float
    q_ratio: float

    def __post_init__(self):
        if not str(self.occupation).strip():
            raise InvalidRecordError("occupation must be nonempty")
        if not np.isfinite(self.earnings) or self.earnings <= 0:
            raise InvalidRecordError(f"earnings must be positive, got {self.earnings}")
        if not np.isfinite(self.q_ratio) or self.q_ratio <= 0:
            raise InvalidRecordError(f"task ratio must be positive, got {self.q_ratio}")

    @classmethod
    def from_row(cls, row: Dict[str, Any], line: int) -> 'WorkerRecord':
        try:
            return cls(occupation=str(row['occupation']), earnings=float(row['earnings']),
                       q_ratio=float(row['q_ratio']))
        except InvalidRecordError as e:
            raise InvalidRecordError(str(e), line) from e
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidRecordError(f"malformed record {row}: {e}", line) from e


@dataclass(frozen=True)
class TargetMoments:
    mean_log_manual_skill: float
    mean_log_cognitive_skill: float
    variance_log_manual_skill: float
    variance_log_cognitive_skill: float
    covariance_log_skills: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise InvalidInputError(f"Target moments must be finite, got {self.as_array()}")

    @classmethod
    def from_array(cls, values: Sequence[float]) -> 'TargetMoments':
        return cls(*[float(v) for v in values])

    @classmethod
    def from_json_data(cls, data: Dict[str, Any]) -> 'TargetMoments':
        missing = [name for name in MOMENT_NAMES if name not in data]
        if missing:
            raise InvalidInputError(f"Moments JSON is missing {missing}")
        return cls(**{name: float(data[name]) for name in MOMENT_NAMES})

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in MOMENT_NAMES])

    def to_json_data(self) -> Dict[str, float]:
        return {name: float(getattr(self, name)) for name in MOMENT_NAMES}

    def covariance(self) -> np.ndarray:
        """Covariance matrix of (log x_m, log x_c) across occupations."""
        return np.array([[self.variance_log_manual_skill, self.covariance_log_skills],
                         [self.covariance_log_skills, self.variance_log_cognitive_skill]])

    def mean(self) -> np.ndarray:
        return np.array([self.mean_log_manual_skill, self.mean_log_cognitive_skill])


@dataclass
class CalibrationResult:
    params: TechParams
    moments: TargetMoments
    objective: float
    iterations: int
    evaluations: int = 0
    start_objective: float = 0.0
    converged: bool = True

    def to_json_data(self) -> Dict[str, Any]:
        return {
            'params': self.params.to_json_data(),
            'moments': self.moments.to_json_data(),
            'objective': self.objective,
            'start_objective': self.start_objective,
            'iterations': self.iterations,
            'evaluations': self.evaluations,
            'converged': self.converged,
        }


REFERENCE_MODEL_MOMENTS = TargetMoments(-0.039, 0.129, 0.263, 0.393, 0.257)
REFERENCE_DATA_MOMENTS = TargetMoments(-0.036, 0.132, 0.234, 0.389, 0.326)
