from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Union
import numpy as np
import pandas as pd
from data_classes.errors import InvalidTechnologyError

TRAJECTORY_COLUMNS = ["t", "T11", "T12", "T21", "T22", "W11", "W12", "W22", "defect"]


@dataclass(eq=False)
class TechPath:
    """Bilinear worker-job technology M(t) = M0 + integral of the rate, on [0, horizon]."""
    m0: np.ndarray
    rate: Union[np.ndarray, Callable[[float], np.ndarray]]
    horizon: float
    steps: int
    t0_map: Optional[np.ndarray] = None
    markers: Optional[np.ndarray] = None

    def __post_init__(self):
        self.m0 = np.array(self.m0, dtype=float)
        d = self.m0.shape[0]
        if self.m0.shape != (d, d):
            raise InvalidTechnologyError(f"M0 must be square, got shape {self.m0.shape}")
        if not callable(self.rate):
            self.rate = np.array(self.rate, dtype=float)
            if self.rate.shape != (d, d):
                raise InvalidTechnologyError(f"Rate shape {self.rate.shape} does not match M0")
        self.t0_map = np.eye(d) if self.t0_map is None else np.array(self.t0_map, dtype=float)
        if self.markers is not None:
            self.markers = np.array(self.markers, dtype=float).reshape(-1, d)
        if self.steps < 1:
            raise InvalidTechnologyError(f"A path needs at least one step, got {self.steps}")
        if not self.horizon > 0:
            raise InvalidTechnologyError(f"Horizon must be positive, got {self.horizon}")
        initial = self.m0 @ self.t0_map
        symmetric = 0.5 * (initial + initial.T)
        if np.abs(initial - initial.T).max() > 1e-10 or np.linalg.eigvalsh(symmetric)[0] <= 0:
            raise InvalidTechnologyError("M0 composed with the initial assignment must be symmetric PD")

    @classmethod
    def from_json_data(cls, data: Dict[str, Any]) -> 'TechPath':
        try:
            return cls(m0=data['M0'], rate=data['Mdot'], horizon=float(data['T']),
                       steps=int(data['steps']), t0_map=data.get('T0'),
                       markers=data.get('markers'))
        except KeyError as e:
            raise InvalidTechnologyError(f"Path JSON is missing {e}") from e

    @property
    def dim(self) -> int:
        return self.m0.shape[0]

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def rate_at(self, t: float) -> np.ndarray:
        if callable(self.rate):
            return np.asarray(self.rate(t), dtype=float)
        return self.rate


@dataclass(eq=False)
class FlowStep:
    t: float
    M: np.ndarray
    T: np.ndarray
    sigma_ww: np.ndarray
    R: np.ndarray
    W_dot: np.ndarray
    W: np.ndarray
    defect: float


@dataclass(eq=False)
class FlowTrajectory:
    steps: List[FlowStep] = field(default_factory=list)
    markers: List[np.ndarray] = field(default_factory=list)
    rearrangement: Optional[np.ndarray] = None
    regime: str = "closed_form"
    defect_excess_time: Optional[float] = None

    @property
    def final(self) -> FlowStep:
        return self.steps[-1]

    def to_dataframe(self) -> pd.DataFrame:
        rows = []
        for step in self.steps:
            if step.T.shape != (2, 2):
                raise InvalidTechnologyError("The trajectory table is defined for 2-D paths")
            rows.append([step.t, step.T[0, 0], step.T[0, 1], step.T[1, 0], step.T[1, 1],
                         step.W[0, 0], step.W[0, 1], step.W[1, 1], step.defect])
        return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)


@dataclass
class OracleComparison:
    sample_size: int
    seed: int
    mean_displacement: float
    identity_fraction: float

    def to_json_data(self) -> Dict[str, Any]:
        return {'sample_size': self.sample_size, 'seed': self.seed,
                'mean_displacement': self.mean_displacement,
                'identity_fraction': self.identity_fraction}
