"""CSV readers and writers for grid fields.

Every file starts with the node coordinates (x1, x2; x1 alone on an interval)
followed by the field columns. Rows are sorted lexicographically by the
coordinates, which is the grid's own node order.
"""
import logging
from pathlib import Path
from typing import List, Optional, Union
import numpy as np
import pandas as pd
from data_classes.decomposition import DecompositionInput, DecompositionResult
from data_classes.errors import DimensionError
from data_classes.grid import Grid, MatrixField, ScalarField, VectorField

logger = logging.getLogger(__name__)

# Exponent form keeps a decimal point on integral values and round-trips doubles.
FLOAT_FORMAT = "%.17e"
DECOMPOSITION_COLUMNS = ["x1", "x2", "f", "A1", "A2", "v1", "v2", "r1", "r2", "wdot"]

PathLike = Union[str, Path]


def coordinate_columns(grid: Grid) -> List[str]:
    return [f"x{k + 1}" for k in range(grid.dim)]


def vector_columns(grid: Grid, prefix: str = "v") -> List[str]:
    return [f"{prefix}{k + 1}" for k in range(grid.dim)]


def matrix_columns(grid: Grid) -> List[str]:
    return [f"c{k + 1}{l + 1}" for k in range(grid.dim) for l in range(grid.dim)]


def _coordinate_frame(grid: Grid) -> pd.DataFrame:
    return pd.DataFrame(grid.points, columns=coordinate_columns(grid))


def scalar_frame(field: ScalarField, name: str = "value") -> pd.DataFrame:
    frame = _coordinate_frame(field.grid)
    frame[name] = field.values
    return frame


def vector_frame(field: VectorField, prefix: str = "v") -> pd.DataFrame:
    frame = _coordinate_frame(field.grid)
    for column, values in zip(vector_columns(field.grid, prefix), field.values.T):
        frame[column] = values
    return frame


def matrix_frame(field: MatrixField) -> pd.DataFrame:
    frame = _coordinate_frame(field.grid)
    flat = field.values.reshape(field.grid.size, -1)
    for column, values in zip(matrix_columns(field.grid), flat.T):
        frame[column] = values
    return frame


def decomposition_frame(data: DecompositionInput, result: DecompositionResult) -> pd.DataFrame:
    """One row per node: density, technology change, both parts and the potential."""
    grid = data.grid
    density = result.density if result.density is not None else data.density
    frame = _coordinate_frame(grid)
    frame["f"] = density.values
    for prefix, field in (("A", data.technology_change), ("v", result.gradient),
                          ("r", result.reallocation)):
        for column, values in zip(vector_columns(grid, prefix), field.values.T):
            frame[column] = values
    frame["wdot"] = result.potential.values
    return frame


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def write_scalar_field(field: ScalarField, path: PathLike) -> Path:
    return write_frame(scalar_frame(field), path)


def write_vector_field(field: VectorField, path: PathLike) -> Path:
    return write_frame(vector_frame(field), path)


def write_matrix_field(field: MatrixField, path: PathLike) -> Path:
    return write_frame(matrix_frame(field), path)


def _read_aligned(path: PathLike, grid: Grid, columns: List[str]) -> np.ndarray:
    """Values of the named columns, reordered to the grid's node order."""
    try:
        frame = pd.read_csv(path, dtype=float, float_precision="round_trip")
    except FileNotFoundError as e:
        raise DimensionError(f"Field file {path} does not exist") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as e:
        raise DimensionError(f"Cannot parse field file {path}: {e}") from e

    expected = coordinate_columns(grid) + columns
    if list(frame.columns) != expected:
        raise DimensionError(f"{path} has columns {list(frame.columns)}, expected {expected}")
    if len(frame) != grid.size:
        raise DimensionError(f"{path} has {len(frame)} rows, the grid has {grid.size} nodes")

    frame = frame.sort_values(coordinate_columns(grid), kind="mergesort")
    coordinates = frame[coordinate_columns(grid)].to_numpy(dtype=float)
    tolerance = 1e-9 * max(1.0, float(np.abs(grid.points).max()))
    if np.abs(coordinates - grid.points).max() > tolerance:
        raise DimensionError(f"Node coordinates in {path} do not match the grid")
    values = frame[columns].to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        raise DimensionError(f"{path} contains non-finite values")
    return values


def read_scalar_field(path: PathLike, grid: Grid, name: str = "value") -> ScalarField:
    return ScalarField(grid, _read_aligned(path, grid, [name])[:, 0])


def read_vector_field(path: PathLike, grid: Grid, prefix: str = "v") -> VectorField:
    return VectorField(grid, _read_aligned(path, grid, vector_columns(grid, prefix)))


def read_matrix_field(path: PathLike, grid: Grid, spd: bool = False) -> MatrixField:
    values = _read_aligned(path, grid, matrix_columns(grid))
    return MatrixField(grid, values.reshape(grid.size, grid.dim, grid.dim), spd=spd)


def read_decomposition_frame(path: PathLike, grid: Optional[Grid] = None) -> pd.DataFrame:
    """Load a decomposition CSV, checking its header when the grid is known."""
    frame = pd.read_csv(path, dtype=float, float_precision="round_trip")
    if grid is not None:
        expected = (coordinate_columns(grid) + ["f"] + vector_columns(grid, "A")
                    + vector_columns(grid, "v") + vector_columns(grid, "r") + ["wdot"])
        if list(frame.columns) != expected:
            raise DimensionError(f"{path} has columns {list(frame.columns)}, expected {expected}")
    return frame
