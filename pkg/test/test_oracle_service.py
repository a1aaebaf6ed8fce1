"""
Unit tests for OracleService.
Tests cover the exact assignment, dual prices, the rearrangement check and the second-order gain.
"""

import numpy as np
import pytest

from config.settings import OracleConfig
from data_classes.errors import DimensionError
from data_classes.instance import DiscreteInstance
from services.oracle_service import OracleService, brute_force_assignment, sample_uniform_disk


@pytest.fixture
def service():
    """Create an OracleService with default settings."""
    return OracleService(OracleConfig())


@pytest.fixture
def small_instance():
    """Three-by-three instance with a unique optimum."""
    return DiscreteInstance.from_output([[4, 1, 3], [2, 0, 5], [3, 2, 2]])


class TestSolveAssignment:
    """Test solve_assignment."""

    def test_small_instance(self, service, small_instance):
        """Test the optimum of a hand-checked instance."""
        solution = service.solve_assignment(small_instance)
        assert solution.total_output == 11.0
        np.testing.assert_array_equal(solution.permutation, [0, 2, 1])

    def test_prices_are_dual_feasible(self, service, small_instance):
        """Test that prices cover every pair and close the duality gap."""
        solution = service.solve_assignment(small_instance)
        assert solution.min_slack(small_instance.output) >= -1e-9
        assert abs(solution.duality_gap) <= 1e-9

    def test_matches_enumeration(self, service):
        """Test agreement with brute force on random 6 x 6 instances."""
        rng = np.random.default_rng(3)
        for _ in range(20):
            output = rng.standard_normal((6, 6))
            solution = service.solve_assignment(DiscreteInstance.from_output(output))
            _, best = brute_force_assignment(output)
            assert solution.total_output == pytest.approx(best, abs=1e-12)
            assert abs(solution.duality_gap) <= 1e-9
            assert solution.min_slack(output) >= -1e-9

    def test_scaling_keeps_matching(self, service, small_instance):
        """Test that scaling the output by c > 0 keeps the matching and scales the total."""
        scaled = small_instance.with_output(2.5 * small_instance.output)
        solution = service.solve_assignment(scaled)
        np.testing.assert_array_equal(solution.permutation, [0, 2, 1])
        assert solution.total_output == pytest.approx(27.5)

    def test_size_limit(self, small_instance):
        """Test that instances above the configured limit are rejected."""
        service = OracleService(OracleConfig(max_instance_size=2))
        with pytest.raises(DimensionError):
            service.solve_assignment(small_instance)

    def test_enumeration_limit(self):
        """Test that brute force refuses large instances."""
        with pytest.raises(DimensionError):
            brute_force_assignment(np.zeros((9, 9)))


class TestRearrangement:
    """Test verify_rearrangement_equivalence."""

    def test_unchanged_output_keeps_identity(self, service, small_instance):
        """Test that an unchanged output needs no rearrangement."""
        report = service.verify_rearrangement_equivalence(small_instance, small_instance.output)
        assert report.is_identity
        assert report.gap == 0.0
        assert report.enumerated_output == 11.0

    def test_random_perturbations(self, service):
        """Test that re-solving equals the best rearrangement of the first matching."""
        rng = np.random.default_rng(9)
        for draw in range(20):
            output = rng.standard_normal((6, 6))
            perturbed = output + 0.5 * rng.standard_normal((6, 6))
            report = service.verify_rearrangement_equivalence(
                DiscreteInstance.from_output(output, seed=draw), perturbed)
            assert report.gap <= 1e-9
            assert report.enumerated_output == pytest.approx(report.direct_output, abs=1e-12)

    def test_mismatched_instance(self):
        """Test that worker and job counts must match the output matrix."""
        with pytest.raises(DimensionError):
            DiscreteInstance(workers=np.zeros((2, 1)), jobs=np.zeros((3, 1)), output=np.zeros((3, 3)))


class TestGain:
    """Test the second-order gain computations."""

    def test_sample_uniform_disk(self):
        """Test that samples lie in the unit disk."""
        points = sample_uniform_disk(500, np.random.default_rng(0))
        assert points.shape == (500, 2)
        assert np.all(np.sum(points ** 2, axis=1) <= 1.0)

    def test_analytic_gain_identity_case(self, service):
        """Test the gain 1/16 for sigma = I and an off-diagonal change."""
        gain = service.analytic_gain(np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]]), grid_n=64)
        assert gain == pytest.approx(1.0 / 16.0, rel=5e-2)

    def test_symmetric_change_gains_nothing(self, service):
        """Test that a symmetric change leaves the identity matching optimal."""
        sample = sample_uniform_disk(60, np.random.default_rng(1))
        report = service.second_order_gain_check(
            sample, np.eye(2), np.diag([0.5, 0.2]), reference=0.0)
        assert max(abs(g) for g in report.gains) <= 1e-9
        assert report.relative_error is None

    def test_gains_are_nonnegative(self, service):
        """Test that re-solving never loses output relative to the frozen matching."""
        report = service.monte_carlo_gain(np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]]), [5],
                                          sample_size=200)
        assert min(report.gains) >= -1e-9
        assert report.samples == [5]
        assert report.reference == pytest.approx(1.0 / 16.0, rel=5e-2)
