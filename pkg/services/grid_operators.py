"""Finite-difference calculus on grids.

Gradients and curls use forward differences, divergence uses backward
differences, so that minus the divergence is the adjoint of the gradient up
to boundary terms. Integrals are midpoint sums with the cell volume as weight.
"""
import logging
from typing import Dict, Optional, Sequence
import numpy as np
from data_classes.errors import DimensionError, UnsupportedDimensionError
from data_classes.grid import Grid, ScalarField, VectorField

logger = logging.getLogger(__name__)


def gradient(s: ScalarField) -> VectorField:
    """Forward differences, backward where the forward neighbour is missing."""
    grid = s.grid
    values = s.values
    result = np.zeros((grid.size, grid.dim))
    for k in range(grid.dim):
        fwd, bwd, h = grid.forward[k], grid.backward[k], grid.spacing[k]
        has_forward = fwd >= 0
        has_backward = ~has_forward & (bwd >= 0)
        result[has_forward, k] = (values[fwd[has_forward]] - values[has_forward]) / h
        result[has_backward, k] = (values[has_backward] - values[bwd[has_backward]]) / h
    return VectorField(grid, result)


def divergence(v: VectorField) -> ScalarField:
    """Backward differences, forward where the backward neighbour is missing."""
    grid = v.grid
    result = np.zeros(grid.size)
    for k in range(grid.dim):
        fwd, bwd, h = grid.forward[k], grid.backward[k], grid.spacing[k]
        component = v.values[:, k]
        has_backward = bwd >= 0
        has_forward = ~has_backward & (fwd >= 0)
        result[has_backward] += (component[has_backward] - component[bwd[has_backward]]) / h
        result[has_forward] += (component[fwd[has_forward]] - component[has_forward]) / h
    return ScalarField(grid, result)


def curl2d(v: VectorField) -> ScalarField:
    """dv2/dx1 - dv1/dx2 on nodes owning a complete forward cell, zero elsewhere."""
    grid = v.grid
    if grid.dim != 2:
        raise UnsupportedDimensionError(f"curl2d needs a 2-D grid, got dimension {grid.dim}")
    result = np.zeros(grid.size)
    cells = grid.complete_cells
    f1, f2 = grid.forward[0][cells], grid.forward[1][cells]
    h1, h2 = grid.spacing
    result[cells] = ((v.values[f1, 1] - v.values[cells, 1]) / h1
                     - (v.values[f2, 0] - v.values[cells, 0]) / h2)
    return ScalarField(grid, result)


def boundary_flux(v: VectorField, f: ScalarField) -> np.ndarray:
    """v(x) . n(x) f(x) on every boundary node, in node order."""
    grid = v.grid
    grid.check_same(f.grid)
    indices = grid.boundary_indices
    return np.einsum('ni,ni->n', v.values[indices], grid.normals[indices]) * f.values[indices]


def integrate(s: ScalarField) -> float:
    return float(np.sum(s.values) * s.grid.cell_volume)


def inner_product(a: VectorField, b: VectorField, f: Optional[ScalarField] = None) -> float:
    """Density-weighted L2 inner product of two vector fields."""
    a.grid.check_same(b.grid)
    pointwise = np.einsum('ni,ni->n', a.values, b.values)
    if f is not None:
        a.grid.check_same(f.grid)
        pointwise = pointwise * f.values
    return float(np.sum(pointwise) * a.grid.cell_volume)


def weighted_norm(v: VectorField, f: Optional[ScalarField] = None) -> float:
    return float(np.sqrt(max(inner_product(v, v, f), 0.0)))


def relative_l2_error(actual: VectorField, expected: VectorField,
                      f: Optional[ScalarField] = None) -> float:
    """f-weighted L2 distance between two fields relative to the size of the second."""
    difference = VectorField(actual.grid, actual.values - expected.values)
    scale = weighted_norm(expected, f)
    error = weighted_norm(difference, f)
    return error / scale if scale > 0 else error


def normalize_density(f: ScalarField, floor_ratio: float = 1e-8) -> ScalarField:
    """Floor a density at a fraction of its maximum and rescale it to unit mass."""
    values = np.asarray(f.values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DimensionError("Density contains non-finite values")
    peak = values.max()
    if peak <= 0:
        raise DimensionError("Density must be positive somewhere on the grid")
    floor = floor_ratio * peak
    floored = int(np.count_nonzero(values < floor))
    if floored:
        logger.debug(f"Raised {floored} density values to the floor {floor:.3e}")
    values = np.maximum(values, floor)
    return ScalarField(f.grid, values / (values.sum() * f.grid.cell_volume))


def uniform_density(grid: Grid) -> ScalarField:
    return ScalarField(grid, np.full(grid.size, 1.0 / (grid.size * grid.cell_volume)))


def gaussian_density(grid: Grid, sd: float, mean: Optional[Sequence[float]] = None,
                     floor_ratio: float = 1e-8) -> ScalarField:
    """Isotropic Gaussian truncated to the active nodes and renormalized."""
    if sd <= 0:
        raise DimensionError(f"Gaussian density needs a positive standard deviation, got {sd}")
    centre = np.zeros(grid.dim) if mean is None else np.asarray(mean, dtype=float)
    squared = np.sum((grid.points - centre) ** 2, axis=1)
    return normalize_density(ScalarField(grid, np.exp(-0.5 * squared / sd ** 2)), floor_ratio)


def feasibility_report(r: VectorField, f: ScalarField,
                       fdot: Optional[ScalarField] = None) -> Dict[str, float]:
    """Residuals of the market-clearing conditions for a reallocation field.

    The divergence residual is the L2 norm over interior nodes of
    div(r f) - fdot; the boundary entry is the largest |r f . n|.
    """
    r.grid.check_same(f.grid)
    flux = VectorField(r.grid, r.values * f.values[:, None])
    return {
        'divergence_residual': divergence_residual(flux, fdot),
        'max_boundary_flux': max_boundary_flux(r, f),
    }


def divergence_residual(flux: VectorField, fdot: Optional[ScalarField] = None) -> float:
    grid = flux.grid
    residual = divergence(flux).values
    if fdot is not None:
        grid.check_same(fdot.grid)
        residual = residual - fdot.values
    interior = ~grid.boundary
    return float(np.sqrt(np.sum(residual[interior] ** 2) * grid.cell_volume))


def max_boundary_flux(r: VectorField, f: ScalarField) -> float:
    fluxes = boundary_flux(r, f)
    return float(np.abs(fluxes).max()) if fluxes.size else 0.0


def fitted_rotation(r: VectorField, f: ScalarField, centre: Sequence[float]) -> float:
    """Density-weighted angular velocity of a 2-D field about a point.

    Positive values mean counterclockwise motion.
    """
    if r.grid.dim != 2:
        raise UnsupportedDimensionError("fitted_rotation needs a 2-D grid")
    offset = r.grid.points - np.asarray(centre, dtype=float)
    cross = offset[:, 0] * r.values[:, 1] - offset[:, 1] * r.values[:, 0]
    moment = np.sum(f.values * np.sum(offset ** 2, axis=1))
    return float(np.sum(f.values * cross) / moment) if moment > 0 else 0.0
