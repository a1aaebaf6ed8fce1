"""Scenario JSON parsing.

A scenario names a grid, a worker density, one technology block and
optionally a distribution change, a solver and a technology path for flows.
File paths inside a scenario are resolved relative to the scenario file.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union
from config.settings import SolverConfig
from data_classes.decomposition import SOLVERS, DecompositionInput
from data_classes.errors import InvalidInputError, ScenarioError
from data_classes.flow import TechPath
from data_classes.grid import Grid, MatrixField, ScalarField, VectorField
from data_classes.technology import BilinearTech
from services import grid_operators
from services.sylvester_service import validate_sigma
from tools import field_io

logger = logging.getLogger(__name__)

DENSITY_TYPES = ("uniform", "gaussian", "file")
TECHNOLOGY_TYPES = ("bilinear", "fields")


def _unique_keys(pairs: List[Tuple[str, Any]]) -> Dict[str, Any]:
    data = {}
    for key, value in pairs:
        if key in data:
            raise ScenarioError(f"Duplicate key '{key}' in scenario")
        data[key] = value
    return data


@dataclass
class ScenarioConfig:
    data: Dict[str, Any]
    base_dir: Path = field(default_factory=Path)
    output_dir: Path = field(default_factory=lambda: Path("output"))
    output_format: str = "csv"

    def __post_init__(self):
        self.base_dir = Path(self.base_dir)
        self.output_dir = Path(self.output_dir)
        self._validate()

    @classmethod
    def from_file(cls, path: Union[str, Path], output_dir: Union[str, Path] = "output",
                  output_format: str = "csv") -> 'ScenarioConfig':
        path = Path(path)
        if not path.is_file():
            raise ScenarioError(f"Scenario file {path} does not exist")
        try:
            data = json.loads(path.read_text(encoding="utf-8"), object_pairs_hook=_unique_keys)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"Scenario {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ScenarioError(f"Scenario {path} must be a JSON object")
        logger.info(f"Loaded scenario {path}")
        return cls(data=data, base_dir=path.parent, output_dir=output_dir,
                   output_format=output_format)

    def _resolve(self, raw: Any, label: str) -> Path:
        if not isinstance(raw, str) or not raw:
            raise ScenarioError(f"{label} must be a file path")
        path = Path(raw)
        if not path.is_absolute():
            path = self.base_dir / path
        if not path.is_file():
            raise ScenarioError(f"{label} file {path} does not exist")
        return path

    def _validate(self):
        data = self.data
        if 'grid' in data and not isinstance(data['grid'], dict):
            raise ScenarioError("'grid' must be an object")

        density = data.get('density', {'type': 'uniform'})
        if not isinstance(density, dict) or density.get('type') not in DENSITY_TYPES:
            raise ScenarioError(f"density.type must be one of {DENSITY_TYPES}")
        if density['type'] == 'file':
            self._resolve(density.get('path'), "density")

        technology = data.get('technology')
        if technology is not None:
            if isinstance(technology, list):
                raise ScenarioError(f"Exactly one technology block allowed, got {len(technology)}")
            if not isinstance(technology, dict) or technology.get('type') not in TECHNOLOGY_TYPES:
                raise ScenarioError(f"technology.type must be one of {TECHNOLOGY_TYPES}")
            if technology['type'] == 'bilinear':
                missing = [key for key in ('sigma', 'dsigma') if key not in technology]
                if missing:
                    raise ScenarioError(f"Bilinear technology is missing {missing}")
            else:
                self._resolve(technology.get('C'), "technology.C")
                self._resolve(technology.get('A'), "technology.A")
        elif 'path' not in data:
            raise ScenarioError("Scenario needs a technology block or a path block")

        if data.get('fdot') is not None:
            self._resolve(data['fdot'], "fdot")
        solver = data.get('solver')
        if solver is not None and solver not in SOLVERS:
            raise ScenarioError(f"Unknown solver '{solver}', expected one of {SOLVERS}")
        psi = data.get('psi')
        if psi is not None and (not isinstance(psi, (int, float)) or psi <= 0):
            raise ScenarioError(f"psi must be a positive number, got {psi}")
        if 'path' in data and not isinstance(data['path'], dict):
            raise ScenarioError("'path' must be an object")

    @property
    def has_path(self) -> bool:
        return 'path' in self.data

    @property
    def has_technology(self) -> bool:
        return self.data.get('technology') is not None

    def build_grid(self, n_override: Optional[int] = None) -> Grid:
        try:
            return Grid.from_json_data(self.data.get('grid', {}), n_override)
        except InvalidInputError:
            raise
        except (TypeError, ValueError, IndexError) as e:
            raise ScenarioError(f"Malformed grid block: {e}") from e

    def build_density(self, grid: Grid, floor_ratio: float = 1e-8) -> ScalarField:
        block = self.data.get('density', {'type': 'uniform'})
        kind = block['type']
        if kind == 'uniform':
            return grid_operators.uniform_density(grid)
        if kind == 'gaussian':
            try:
                sd = float(block['sd'])
            except (KeyError, TypeError, ValueError) as e:
                raise ScenarioError("Gaussian density needs a numeric 'sd'") from e
            return grid_operators.gaussian_density(grid, sd, block.get('mean'), floor_ratio)
        values = field_io.read_scalar_field(self._resolve(block['path'], "density"), grid)
        return grid_operators.normalize_density(values, floor_ratio)

    def bilinear_technology(self) -> Optional[BilinearTech]:
        technology = self.data.get('technology')
        if not technology or technology.get('type') != 'bilinear':
            return None
        tech = BilinearTech.from_json_data(technology)
        validate_sigma(tech.sigma)
        return tech

    def build_technology(self, grid: Grid) -> Tuple[MatrixField, VectorField]:
        """Complementarity and technology-change fields on the grid."""
        if not self.has_technology:
            raise ScenarioError("Scenario has no technology block")
        tech = self.bilinear_technology()
        if tech is not None:
            if tech.dim != grid.dim:
                raise ScenarioError(f"Technology is {tech.dim}-D but the grid is {grid.dim}-D")
            return (MatrixField.constant(grid, tech.sigma, spd=True),
                    VectorField.linear(grid, tech.dsigma))
        technology = self.data['technology']
        C = field_io.read_matrix_field(self._resolve(technology['C'], "technology.C"), grid,
                                       spd=True)
        A = field_io.read_vector_field(self._resolve(technology['A'], "technology.A"), grid)
        return C, A

    def build_density_change(self, grid: Grid) -> Optional[ScalarField]:
        raw = self.data.get('fdot')
        if raw is None:
            return None
        return field_io.read_scalar_field(self._resolve(raw, "fdot"), grid)

    def build_input(self, grid: Grid, solver_config: SolverConfig,
                    solver: Optional[str] = None, psi: Optional[float] = None) -> DecompositionInput:
        """Decomposition input with command-line overrides taking precedence."""
        C, A = self.build_technology(grid)
        return DecompositionInput(
            density=self.build_density(grid, solver_config.density_floor),
            complementarity=C,
            technology_change=A,
            density_change=self.build_density_change(grid),
            psi=psi if psi is not None else self.data.get('psi', solver_config.psi),
            solver=solver or self.data.get('solver') or solver_config.method)

    def build_path(self) -> TechPath:
        if not self.has_path:
            raise ScenarioError("Scenario has no path block")
        path = TechPath.from_json_data(self.data['path'])
        logger.debug(f"Path with {path.steps} steps over horizon {path.horizon}")
        return path

