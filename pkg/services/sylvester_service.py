"""Closed-form comparative statics for bilinear technologies.

With output x'^T Sigma x the reallocation generator R solves the Sylvester
equation Sigma R + R Sigma = dSigma - dSigma^T and the earnings slope changes
by W = dSigma - Sigma R.
"""
import logging
import numpy as np
from scipy import linalg
from data_classes.errors import InvalidTechnologyError
from data_classes.technology import BilinearDecomposition, BilinearTech

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-10
CONDITION_FLOOR = 1e-12

# rotation generator: R = theta * J moves x counterclockwise for theta > 0
ROTATION_GENERATOR = np.array([[0.0, -1.0], [1.0, 0.0]])


def validate_sigma(sigma: np.ndarray) -> np.ndarray:
    """Eigenvalues of a symmetric positive definite sigma, or an error."""
    if np.abs(sigma - sigma.T).max() > SYMMETRY_TOLERANCE:
        raise InvalidTechnologyError("sigma must be symmetric")
    eigenvalues = linalg.eigvalsh(sigma)
    if eigenvalues[-1] <= 0 or eigenvalues[0] <= CONDITION_FLOOR * eigenvalues[-1]:
        raise InvalidTechnologyError(
            f"sigma must be positive definite, eigenvalues {eigenvalues.tolist()}")
    return eigenvalues


def solve_sylvester(tech: BilinearTech) -> np.ndarray:
    """Unique antisymmetric R with Sigma R + R Sigma = dSigma - dSigma^T."""
    validate_sigma(tech.sigma)
    eigenvalues, basis = linalg.eigh(0.5 * (tech.sigma + tech.sigma.T))
    rhs = basis.T @ (tech.dsigma - tech.dsigma.T) @ basis
    rotated = rhs / (eigenvalues[:, None] + eigenvalues[None, :])
    R = basis @ rotated @ basis.T
    return 0.5 * (R - R.T)


def solve_sylvester_reference(tech: BilinearTech) -> np.ndarray:
    """Bartels-Stewart solution of the same equation, for cross-checking."""
    validate_sigma(tech.sigma)
    return linalg.solve_sylvester(tech.sigma, tech.sigma, tech.dsigma - tech.dsigma.T)


def earnings_slope(tech: BilinearTech, R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != tech.sigma.shape:
        raise InvalidTechnologyError(f"R has shape {R.shape}, expected {tech.sigma.shape}")
    scale = max(1.0, np.abs(R).max())
    if np.abs(R + R.T).max() > SYMMETRY_TOLERANCE * scale:
        raise InvalidTechnologyError("R must be antisymmetric")
    return tech.dsigma - tech.sigma @ R


def rotation_angle_2d(alpha: float, beta: float, gamma: float, delta: float,
                      d_alpha: float, d_beta: float, d_gamma: float, d_delta: float) -> float:
    """Rotation speed theta = (d_gamma - d_beta) / (alpha + delta)."""
    if alpha + delta <= 0:
        raise InvalidTechnologyError(f"alpha + delta must be positive, got {alpha + delta}")
    if abs(beta - gamma) > SYMMETRY_TOLERANCE:
        raise InvalidTechnologyError(f"beta={beta} and gamma={gamma} must coincide")
    return (d_gamma - d_beta) / (alpha + delta)


def rotation_generator_2d(theta: float) -> np.ndarray:
    return theta * ROTATION_GENERATOR


def _entries(tech: BilinearTech):
    if tech.dim != 2:
        raise InvalidTechnologyError(f"Expected a 2x2 technology, got dimension {tech.dim}")
    (alpha, beta), (gamma, delta) = tech.sigma
    (d_alpha, d_beta), (d_gamma, d_delta) = tech.dsigma
    return alpha, beta, gamma, delta, d_alpha, d_beta, d_gamma, d_delta


def tabulate_earnings_slope_2d(tech: BilinearTech) -> np.ndarray:
    """Entries of W written out in terms of alpha, beta, delta and the rates."""
    alpha, beta, gamma, delta, d_alpha, d_beta, d_gamma, d_delta = _entries(tech)
    validate_sigma(tech.sigma)
    tilt = (d_gamma - d_beta) / (alpha + delta)
    w11 = d_alpha - beta * tilt
    w12 = (alpha * d_gamma + delta * d_beta) / (alpha + delta)
    # trace(W) = trace(dSigma) fixes the sign of the correction
    w22 = d_delta + gamma * tilt
    return np.array([[w11, w12], [w12, w22]])


def decompose_bilinear(tech: BilinearTech) -> BilinearDecomposition:
    R = solve_sylvester(tech)
    W = earnings_slope(tech, R)
    theta = None
    if tech.dim == 2:
        theta = rotation_angle_2d(*_entries(tech))
    logger.debug(f"Bilinear decomposition: |R|={np.linalg.norm(R):.4g}, theta={theta}")
    return BilinearDecomposition(R=R, W=W, theta=theta)
