from dataclasses import dataclass
from typing import Any, Dict, Optional
import numpy as np
from data_classes.errors import InvalidTechnologyError


@dataclass(eq=False)
class BilinearTech:
    sigma: np.ndarray
    dsigma: np.ndarray

    def __post_init__(self):
        self.sigma = np.array(self.sigma, dtype=float)
        self.dsigma = np.array(self.dsigma, dtype=float)
        if self.sigma.ndim != 2 or self.sigma.shape[0] != self.sigma.shape[1]:
            raise InvalidTechnologyError(f"sigma must be square, got shape {self.sigma.shape}")
        if self.dsigma.shape != self.sigma.shape:
            raise InvalidTechnologyError(
                f"dsigma shape {self.dsigma.shape} does not match sigma {self.sigma.shape}")
        if not (np.all(np.isfinite(self.sigma)) and np.all(np.isfinite(self.dsigma))):
            raise InvalidTechnologyError("Technology matrices must be finite")

    @classmethod
    def from_json_data(cls, data: Dict[str, Any]) -> 'BilinearTech':
        if 'sigma' not in data or 'dsigma' not in data:
            raise InvalidTechnologyError("Technology JSON needs 'sigma' and 'dsigma'")
        return cls(sigma=data['sigma'], dsigma=data['dsigma'])

    @classmethod
    def from_entries(cls, alpha: float, beta: float, gamma: float, delta: float,
                     d_alpha: float = 0.0, d_beta: float = 0.0, d_gamma: float = 0.0,
                     d_delta: float = 0.0) -> 'BilinearTech':
        """2-D technology from the entries [[alpha, beta], [gamma, delta]] and their rates."""
        return cls(sigma=[[alpha, beta], [gamma, delta]],
                   dsigma=[[d_alpha, d_beta], [d_gamma, d_delta]])

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    def to_json_data(self) -> Dict[str, Any]:
        return {'sigma': self.sigma.tolist(), 'dsigma': self.dsigma.tolist()}


@dataclass(eq=False)
class BilinearDecomposition:
    R: np.ndarray
    W: np.ndarray
    theta: Optional[float] = None

    def to_json_data(self) -> Dict[str, Any]:
        return {'R': self.R.tolist(), 'W': self.W.tolist(), 'theta': self.theta}


@dataclass(frozen=True)
class TechParams:
    """Coefficients of the earnings quadratic 2w = alpha x_c^2 + 2 beta x_c x_m + delta x_m^2."""
    alpha: float
    beta: float
    delta: float

    def __post_init__(self):
        values = (self.alpha, self.beta, self.delta)
        if not all(np.isfinite(values)):
            raise InvalidTechnologyError(f"Parameters must be finite, got {values}")
        if self.alpha <= 0 or self.delta <= 0:
            raise InvalidTechnologyError(
                f"alpha and delta must be positive, got alpha={self.alpha}, delta={self.delta}")
        if self.alpha * self.delta <= self.beta ** 2:
            raise InvalidTechnologyError(
                f"Twist condition alpha*delta > beta^2 fails for {values}")

    @classmethod
    def from_json_data(cls, data: Dict[str, Any]) -> 'TechParams':
        try:
            return cls(alpha=float(data['alpha']), beta=float(data['beta']),
                       delta=float(data['delta']))
        except KeyError as e:
            raise InvalidTechnologyError(f"Parameter JSON is missing {e}") from e

    def to_json_data(self) -> Dict[str, float]:
        return {'alpha': self.alpha, 'beta': self.beta, 'delta': self.delta}

    def skill_matrix(self) -> np.ndarray:
        """Complementarity in (manual, cognitive) coordinates implied by the earnings quadratic."""
        return np.array([[self.delta, self.beta], [self.beta, self.alpha]])


REFERENCE_PARAMS = TechParams(alpha=0.239, beta=0.020, delta=0.036)
