"""
Unit tests for ScenarioConfig.
Tests cover JSON parsing, validation errors, relative file paths and the builders.
"""

import json

import numpy as np
import pytest

from config.settings import SolverConfig
from data_classes.errors import ScenarioError
from data_classes.grid import Grid, MatrixField, ScalarField, VectorField
from tools import field_io
from tools.scenario_loader import ScenarioConfig

BILINEAR = {'type': 'bilinear', 'sigma': [[1.0, 0.0], [0.0, 1.0]], 'dsigma': [[0.0, 1.0], [0.0, 0.0]]}


@pytest.fixture
def write_scenario(tmp_path):
    """Write a scenario dictionary or raw text to a file and return its path."""
    def _write(content, name="scenario.json"):
        path = tmp_path / name
        path.write_text(content if isinstance(content, str) else json.dumps(content))
        return path
    return _write


class TestParsing:
    """Test ScenarioConfig.from_file."""

    def test_bilinear_scenario(self, write_scenario):
        """Test a complete bilinear scenario."""
        path = write_scenario({'grid': {'shape': 'disk', 'n': 16},
                               'density': {'type': 'gaussian', 'sd': 0.3},
                               'technology': BILINEAR, 'solver': 'direct'})
        scenario = ScenarioConfig.from_file(path)
        assert scenario.has_technology
        assert not scenario.has_path
        grid = scenario.build_grid()
        assert grid.shape == "disk"
        data = scenario.build_input(grid, SolverConfig())
        assert data.solver == "direct"
        np.testing.assert_allclose(data.technology_change.values[:, 0], grid.points[:, 1])

    def test_command_line_overrides(self, write_scenario):
        """Test that explicit solver and psi beat the scenario values."""
        path = write_scenario({'grid': {'n': 8}, 'technology': BILINEAR,
                               'solver': 'direct', 'psi': 10.0})
        scenario = ScenarioConfig.from_file(path)
        grid = scenario.build_grid(n_override=12)
        data = scenario.build_input(grid, SolverConfig(), solver="penalized", psi=5.0)
        assert grid.counts == (12, 12)
        assert data.solver == "penalized"
        assert data.psi == 5.0

    def test_missing_file(self, tmp_path):
        """Test that a missing scenario file is rejected."""
        with pytest.raises(ScenarioError):
            ScenarioConfig.from_file(tmp_path / "absent.json")

    def test_invalid_json(self, write_scenario):
        """Test that malformed JSON is rejected."""
        with pytest.raises(ScenarioError):
            ScenarioConfig.from_file(write_scenario("{not json"))

    def test_duplicate_technology(self, write_scenario):
        """Test that two technology blocks are rejected."""
        text = '{"technology": %s, "technology": %s}' % (json.dumps(BILINEAR), json.dumps(BILINEAR))
        with pytest.raises(ScenarioError):
            ScenarioConfig.from_file(write_scenario(text))

    def test_technology_list(self, write_scenario):
        """Test that a list of technology blocks is rejected."""
        with pytest.raises(ScenarioError):
            ScenarioConfig.from_file(write_scenario({'technology': [BILINEAR, BILINEAR]}))


class TestValidation:
    """Test scenario validation rules."""

    @pytest.mark.parametrize("data", [
        {},
        {'technology': {'type': 'spline'}},
        {'technology': {'type': 'bilinear', 'sigma': [[1.0]]}},
        {'technology': BILINEAR, 'density': {'type': 'lognormal'}},
        {'technology': BILINEAR, 'solver': 'multigrid'},
        {'technology': BILINEAR, 'psi': -1.0},
        {'technology': BILINEAR, 'fdot': 'missing.csv'},
        {'technology': {'type': 'fields', 'C': 'C.csv', 'A': 'A.csv'}},
    ])
    def test_rejected(self, data):
        """Test that malformed scenarios raise ScenarioError."""
        with pytest.raises(ScenarioError):
            ScenarioConfig(data=data)

    def test_path_only_scenario(self):
        """Test that a path block alone is enough for flows."""
        scenario = ScenarioConfig(data={'path': {'M0': [[1.0, 0.0], [0.0, 1.0]],
                                                 'Mdot': [[0.0, 0.1], [0.0, 0.0]],
                                                 'T': 1.0, 'steps': 4}})
        assert scenario.has_path
        assert scenario.build_path().steps == 4
        with pytest.raises(ScenarioError):
            scenario.build_technology(Grid.rectangle(8))

    def test_gaussian_needs_sd(self):
        """Test that a Gaussian density without sd fails when built."""
        scenario = ScenarioConfig(data={'technology': BILINEAR, 'density': {'type': 'gaussian'}})
        with pytest.raises(ScenarioError):
            scenario.build_density(Grid.rectangle(8))

    def test_dimension_mismatch(self):
        """Test that a 2-D technology on an interval is rejected."""
        scenario = ScenarioConfig(data={'technology': BILINEAR})
        with pytest.raises(ScenarioError):
            scenario.build_technology(Grid.interval(8))


class TestFieldFiles:
    """Test scenarios that reference CSV files."""

    def test_fields_relative_to_scenario(self, tmp_path, write_scenario):
        """Test that field files are resolved next to the scenario."""
        grid = Grid.rectangle(8)
        field_io.write_matrix_field(MatrixField.constant(grid, np.eye(2), spd=True), tmp_path / "C.csv")
        field_io.write_vector_field(VectorField.zeros(grid), tmp_path / "A.csv")
        field_io.write_scalar_field(ScalarField.constant(grid, 0.0), tmp_path / "fdot.csv")
        path = write_scenario({'grid': {'n': 8},
                               'technology': {'type': 'fields', 'C': 'C.csv', 'A': 'A.csv'},
                               'fdot': 'fdot.csv'})
        scenario = ScenarioConfig.from_file(path)
        data = scenario.build_input(scenario.build_grid(), SolverConfig())
        assert data.density_change is not None
        assert data.complementarity.is_spd()
