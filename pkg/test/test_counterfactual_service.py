"""
Unit tests for CounterfactualService.
Tests cover the skill grid, the technology change, the anchored earnings change and rate validation.
"""

import numpy as np
import pytest

from config.settings import AppConfig
from data_classes.errors import InvalidInputError
from data_classes.grid import Grid, ScalarField, VectorField
from data_classes.technology import REFERENCE_PARAMS
from services import grid_operators
from services.counterfactual_service import (CounterfactualService, anchor_earnings_change,
                                             zero_crossings)
from services.inference_service import synthesize_records


@pytest.fixture(scope="module")
def counterfactual():
    """Run one small counterfactual on synthetic records."""
    records = synthesize_records(REFERENCE_PARAMS, 20, 20, seed=1)
    service = CounterfactualService(AppConfig())
    return service.run(records, REFERENCE_PARAMS, 0.1, 0.1, grid_n=24)


class TestRun:
    """Test CounterfactualService.run."""

    def test_grid_covers_positive_skills(self, counterfactual):
        """Test that the skill grid lies in the positive quadrant."""
        assert counterfactual.grid.counts == (24, 24)
        assert np.all(counterfactual.grid.points > 0)
        assert counterfactual.skills.shape == (400, 2)

    def test_density_has_unit_mass(self, counterfactual):
        """Test the estimated skill density."""
        assert grid_operators.integrate(counterfactual.density) == pytest.approx(1.0)

    def test_change_only_moves_cognitive_product(self, counterfactual):
        """Test that the change is (0, gamma_dot x_m + delta_dot x_c)."""
        change = counterfactual.technology_change.values
        points = counterfactual.grid.points
        assert not np.any(change[:, 0])
        np.testing.assert_allclose(change[:, 1], 0.1 * (points[:, 0] + points[:, 1]), atol=1e-12)

    def test_reallocation_rotates_counterclockwise(self, counterfactual):
        """Test that workers rotate towards cognitive jobs."""
        assert counterfactual.rotation > 0

    def test_earnings_fields(self, counterfactual):
        """Test the earnings and percentage change fields."""
        assert np.all(counterfactual.earnings.values > 0)
        np.testing.assert_allclose(
            counterfactual.percent_change.values,
            100.0 * counterfactual.earnings_change.values / counterfactual.earnings.values)
        assert counterfactual.zero_change.shape == (counterfactual.grid.size,)

    def test_negative_rate(self):
        """Test that negative rates are rejected."""
        records = synthesize_records(REFERENCE_PARAMS, 3, 3, seed=0)
        with pytest.raises(InvalidInputError):
            CounterfactualService().run(records, REFERENCE_PARAMS, -0.1, 0.1)


class TestHelpers:
    """Test the anchoring and zero-crossing helpers."""

    def test_anchor_recovers_homogeneous_potential(self):
        """Test that the free constant is fixed by degree-two homogeneity."""
        grid = Grid.rectangle(8)
        squared = 0.5 * np.sum(grid.points ** 2, axis=1)
        potential = ScalarField(grid, squared - 3.0)
        gradient = VectorField(grid, grid.points)
        anchored = anchor_earnings_change(potential, gradient, grid_operators.uniform_density(grid))
        np.testing.assert_allclose(anchored.values, squared, atol=1e-12)

    def test_zero_crossings(self):
        """Test that sign changes and exact zeros are flagged."""
        grid = Grid.interval(5)
        values = np.array([1.0, 2.0, -1.0, 0.0, 3.0])
        np.testing.assert_array_equal(zero_crossings(values, grid),
                                      [False, True, False, True, False])
