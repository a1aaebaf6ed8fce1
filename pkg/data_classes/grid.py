"""Node lattices and the per-node fields that live on them.

Grids are cell-centred: along an axis [a, b] split into n cells the nodes sit
at a + (i + 1/2)(b - a)/n. Disks are masked squares. Only active nodes carry
field values, stored in row-major lattice order, which is lexicographic in
(x1, x2).
"""
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence, Tuple
import numpy as np
from data_classes.errors import DimensionError, InvalidTechnologyError

logger = logging.getLogger(__name__)

SHAPES = ("rect", "disk", "interval")


@dataclass
class Grid:
    shape: str
    counts: Tuple[int, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    center: Optional[Tuple[float, float]] = None
    radius: Optional[float] = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise DimensionError(f"Unknown grid shape '{self.shape}'")
        self.counts = tuple(int(n) for n in self.counts)
        self.lower = tuple(float(a) for a in self.lower)
        self.upper = tuple(float(b) for b in self.upper)
        expected_dim = 1 if self.shape == "interval" else 2
        if not (len(self.counts) == len(self.lower) == len(self.upper) == expected_dim):
            raise DimensionError(
                f"A {self.shape} grid needs {expected_dim} axes, got {len(self.counts)}")
        if any(n < 2 for n in self.counts):
            raise DimensionError(f"Every axis needs at least 2 nodes, got {self.counts}")
        if any(b <= a for a, b in zip(self.lower, self.upper)):
            raise DimensionError(f"Empty axis range {self.lower} .. {self.upper}")
        if self.shape == "disk" and (self.radius is None or self.radius <= 0):
            raise DimensionError("A disk grid needs a positive radius")

        self._build_lattice()

    def _build_lattice(self):
        """Compute node coordinates, neighbour tables, boundary flags and normals."""
        self.dim = len(self.counts)
        self.spacing = tuple((b - a) / n for a, b, n in zip(self.lower, self.upper, self.counts))
        self.axes = tuple(a + (np.arange(n) + 0.5) * h
                          for a, n, h in zip(self.lower, self.counts, self.spacing))

        mesh = np.meshgrid(*self.axes, indexing="ij")
        mask = np.ones(self.counts, dtype=bool)
        if self.shape == "disk":
            cx, cy = self.center
            squared = (mesh[0] - cx) ** 2 + (mesh[1] - cy) ** 2
            mask = squared <= self.radius ** 2 * (1.0 + 1e-12)

        self.lattice_mask = mask
        self.lattice_positions = np.argwhere(mask)
        self.size = len(self.lattice_positions)
        self.lattice_index = np.full(self.counts, -1, dtype=np.int64)
        self.lattice_index[tuple(self.lattice_positions.T)] = np.arange(self.size)
        self.points = np.column_stack(
            [self.axes[k][self.lattice_positions[:, k]] for k in range(self.dim)])

        self.forward = tuple(self._neighbours(k, 1) for k in range(self.dim))
        self.backward = tuple(self._neighbours(k, -1) for k in range(self.dim))
        missing = np.zeros(self.size, dtype=bool)
        for k in range(self.dim):
            missing |= (self.forward[k] < 0) | (self.backward[k] < 0)
        self.boundary = missing
        self.normals = self._outward_normals()

        if self.dim == 2:
            diagonal = np.full(self.size, -1, dtype=np.int64)
            has_both = (self.forward[0] >= 0) & (self.forward[1] >= 0)
            diagonal[has_both] = self.forward[1][self.forward[0][has_both]]
            self.diagonal = diagonal
            self.complete_cells = diagonal >= 0
        else:
            self.diagonal = None
            self.complete_cells = self.forward[0] >= 0

        for array in (self.points, self.lattice_positions, self.normals, self.boundary):
            array.flags.writeable = False
        logger.debug(f"Built {self.shape} grid {self.counts} with {self.size} active nodes")

    def _neighbours(self, axis: int, step: int) -> np.ndarray:
        """Index of the active neighbour one step along an axis, -1 when absent."""
        shifted = self.lattice_positions.copy()
        shifted[:, axis] += step
        inside = (shifted[:, axis] >= 0) & (shifted[:, axis] < self.counts[axis])
        result = np.full(self.size, -1, dtype=np.int64)
        result[inside] = self.lattice_index[tuple(shifted[inside].T)]
        result.flags.writeable = False
        return result

    def _outward_normals(self) -> np.ndarray:
        """Unit outward normals on boundary nodes, zero elsewhere."""
        normals = np.zeros((self.size, self.dim))
        for k in range(self.dim):
            normals[self.forward[k] < 0, k] += 1.0
            normals[self.backward[k] < 0, k] -= 1.0

        if self.shape == "disk":
            offset = self.points - np.asarray(self.center)
            length = np.linalg.norm(offset, axis=1)
            radial = self.boundary & (length > 0)
            normals[radial] = offset[radial] / length[radial, None]

        length = np.linalg.norm(normals, axis=1)
        flagged = self.boundary & (length > 0)
        normals[flagged] /= length[flagged, None]
        # opposite faces missing cancel out; fall back to the first missing axis
        for index in np.flatnonzero(self.boundary & (length == 0)):
            for k in range(self.dim):
                if self.forward[k][index] < 0:
                    normals[index, k] = 1.0
                    break
        return normals

    @classmethod
    def rectangle(cls, n: int, bounds: Sequence[Sequence[float]] = ((0.0, 1.0), (0.0, 1.0)),
                  n2: Optional[int] = None) -> 'Grid':
        return cls(shape="rect",
                   counts=(n, n2 if n2 is not None else n),
                   lower=(bounds[0][0], bounds[1][0]),
                   upper=(bounds[0][1], bounds[1][1]))

    @classmethod
    def disk(cls, n: int, radius: float = 1.0,
             center: Tuple[float, float] = (0.0, 0.0)) -> 'Grid':
        cx, cy = float(center[0]), float(center[1])
        return cls(shape="disk", counts=(n, n),
                   lower=(cx - radius, cy - radius), upper=(cx + radius, cy + radius),
                   center=(cx, cy), radius=float(radius))

    @classmethod
    def interval(cls, n: int, bounds: Sequence[float] = (0.0, 1.0)) -> 'Grid':
        return cls(shape="interval", counts=(n,), lower=(bounds[0],), upper=(bounds[1],))

    @classmethod
    def from_json_data(cls, data: Dict[str, Any], n_override: Optional[int] = None) -> 'Grid':
        n = int(n_override if n_override is not None else data.get('n', 64))
        shape = data.get('shape', 'rect')
        if shape == 'disk':
            return cls.disk(n, radius=float(data.get('radius', 1.0)),
                            center=tuple(data.get('center', (0.0, 0.0))))
        if shape == 'interval':
            return cls.interval(n, bounds=tuple(data.get('bounds', (0.0, 1.0))))
        return cls.rectangle(n, bounds=data.get('bounds', ((0.0, 1.0), (0.0, 1.0))))

    def to_json_data(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'shape': self.shape, 'n': self.counts[0]}
        if self.shape == 'disk':
            data.update(radius=self.radius, center=list(self.center))
        elif self.shape == 'interval':
            data['bounds'] = [self.lower[0], self.upper[0]]
        else:
            data['bounds'] = [[a, b] for a, b in zip(self.lower, self.upper)]
        return data

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def mean_spacing(self) -> float:
        """Geometric mean of the axis spacings."""
        return float(np.prod(self.spacing) ** (1.0 / self.dim))

    @property
    def boundary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    def interior_axis_counts(self) -> Tuple[int, ...]:
        """Number of distinct lattice positions per axis holding an interior node."""
        interior = self.lattice_positions[~self.boundary]
        return tuple(len(np.unique(interior[:, k])) for k in range(self.dim))

    def nearest_node(self, point: Sequence[float]) -> int:
        return int(np.argmin(np.linalg.norm(self.points - np.asarray(point, dtype=float), axis=1)))

    def check_same(self, other: 'Grid'):
        """Raise when two fields are defined on different grids."""
        if other is not self and other != self:
            raise DimensionError("Fields live on different grids")


def _frozen(values: Any, shape: Tuple[int, ...], label: str) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.shape != shape:
        raise DimensionError(f"{label} expects shape {shape}, got {array.shape}")
    array.flags.writeable = False
    return array


@dataclass(eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = _frozen(self.values, (self.grid.size,), "ScalarField")

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[..., Any]) -> 'ScalarField':
        raw = func(*grid.points.T)
        return cls(grid, np.broadcast_to(np.asarray(raw, dtype=float), (grid.size,)))

    @classmethod
    def constant(cls, grid: Grid, value: float = 0.0) -> 'ScalarField':
        return cls(grid, np.full(grid.size, float(value)))


@dataclass(eq=False)
class VectorField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = _frozen(self.values, (self.grid.size, self.grid.dim), "VectorField")

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[..., Sequence[Any]]) -> 'VectorField':
        components = func(*grid.points.T)
        return cls(grid, np.column_stack(
            [np.broadcast_to(np.asarray(c, dtype=float), (grid.size,)) for c in components]))

    @classmethod
    def linear(cls, grid: Grid, matrix: np.ndarray) -> 'VectorField':
        """The field x -> M x."""
        return cls(grid, grid.points @ np.asarray(matrix, dtype=float).T)

    @classmethod
    def zeros(cls, grid: Grid) -> 'VectorField':
        return cls(grid, np.zeros((grid.size, grid.dim)))

    def component(self, k: int) -> np.ndarray:
        return self.values[:, k]


@dataclass(eq=False)
class MatrixField:
    grid: Grid
    values: np.ndarray
    spd: bool = False

    def __post_init__(self):
        d = self.grid.dim
        self.values = _frozen(self.values, (self.grid.size, d, d), "MatrixField")
        if self.spd and not self.is_spd():
            raise InvalidTechnologyError("Matrix field flagged SPD is not symmetric positive definite")

    @classmethod
    def constant(cls, grid: Grid, matrix: np.ndarray, spd: bool = False) -> 'MatrixField':
        matrix = np.asarray(matrix, dtype=float).reshape(grid.dim, grid.dim)
        return cls(grid, np.broadcast_to(matrix, (grid.size, grid.dim, grid.dim)), spd=spd)

    def is_spd(self, tolerance: float = 1e-10) -> bool:
        asymmetry = np.abs(self.values - np.swapaxes(self.values, 1, 2)).max()
        if asymmetry > tolerance:
            return False
        smallest = np.linalg.eigvalsh(0.5 * (self.values + np.swapaxes(self.values, 1, 2)))[:, 0]
        return bool(np.all(smallest > 0))

    def inverse(self) -> 'MatrixField':
        return MatrixField(self.grid, np.linalg.inv(self.values), spd=False)

    def apply(self, field: VectorField) -> VectorField:
        self.grid.check_same(field.grid)
        return VectorField(self.grid, np.einsum('nij,nj->ni', self.values, field.values))

    def solve(self, field: VectorField) -> VectorField:
        """Pointwise C(x)^-1 v(x)."""
        self.grid.check_same(field.grid)
        return VectorField(self.grid, np.linalg.solve(self.values, field.values[..., None])[..., 0])
