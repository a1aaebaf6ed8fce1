"""
Unit tests for skill inference, density estimation and calibration.
Tests cover the closed-form skill inversion, occupation moments, winsorizing,
kernel densities, synthetic records and the moment-matching calibration.
"""

import numpy as np
import pytest

from config.settings import CalibrationConfig
from data_classes.errors import InvalidInputError, InvalidRecordError, StartPointError
from data_classes.grid import Grid
from data_classes.records import REFERENCE_MODEL_MOMENTS, TargetMoments, WorkerRecord
from data_classes.technology import REFERENCE_PARAMS, TechParams
from services import grid_operators
from services.inference_service import (InferenceService, infer_skill_arrays, infer_skills,
                                        kde_density, occupation_moments, records_frame,
                                        silverman_bandwidth, skills_table, synthesize_records,
                                        winsorize)


@pytest.fixture
def flat_params():
    """Reference parameters with the cross term switched off."""
    return TechParams(REFERENCE_PARAMS.alpha, 0.0, REFERENCE_PARAMS.delta)


@pytest.fixture
def two_occupations(flat_params):
    """Two occupations with log skills (0, 0) and (2, 1)."""
    a, d = flat_params.alpha, flat_params.delta
    e = np.e
    return [
        WorkerRecord("first", 0.5 * (a + d), 1.0),
        WorkerRecord("second", 0.5 * (a * e ** 2 + d * e ** 4), e),
    ]


class TestSkillInference:
    """Test infer_skills and infer_skill_arrays."""

    @pytest.mark.parametrize("earnings, ratio, cognitive_sq, manual_sq", [
        (0.5, 1.0, lambda a, d: 1.0 / (a + d), lambda a, d: 1.0 / (a + d)),
        (1.0, 1.0, lambda a, d: 2.0 / (a + d), lambda a, d: 2.0 / (a + d)),
        (0.5, 2.0, lambda a, d: 1.0 / (a + 4 * d), lambda a, d: 4.0 / (a + 4 * d)),
    ])
    def test_worked_rows(self, flat_params, earnings, ratio, cognitive_sq, manual_sq):
        """Test the written-out skills for a zero cross term."""
        a, d = flat_params.alpha, flat_params.delta
        manual, cognitive = infer_skills(WorkerRecord("row", earnings, ratio), flat_params)
        assert cognitive ** 2 == pytest.approx(cognitive_sq(a, d), rel=1e-12)
        assert manual ** 2 == pytest.approx(manual_sq(a, d), rel=1e-12)

    def test_reconstructs_earnings(self):
        """Test that inferred skills reproduce each worker's earnings."""
        rng = np.random.default_rng(4)
        earnings = rng.uniform(10.0, 200.0, size=50)
        ratios = rng.uniform(0.3, 3.0, size=50)
        p = REFERENCE_PARAMS
        manual, cognitive = infer_skill_arrays(earnings, ratios, p)
        rebuilt = 0.5 * (p.alpha * cognitive ** 2 + 2 * p.beta * cognitive * manual
                         + p.delta * manual ** 2)
        np.testing.assert_allclose(rebuilt, earnings, rtol=1e-12)
        np.testing.assert_allclose(manual / cognitive, ratios, rtol=1e-12)

    def test_higher_earnings_higher_skills(self):
        """Test that higher pay with a lower ratio still ranks both skills higher."""
        police = infer_skills(WorkerRecord("police", 64.0, np.exp(-0.1)), REFERENCE_PARAMS)
        physicians = infer_skills(WorkerRecord("physicians", 184.0, np.exp(-0.2)), REFERENCE_PARAMS)
        assert physicians[0] > police[0]
        assert physicians[1] > police[1]

    def test_rejects_nonpositive_values(self):
        """Test that zero earnings are rejected."""
        with pytest.raises(InvalidRecordError):
            infer_skill_arrays(np.array([0.0]), np.array([1.0]), REFERENCE_PARAMS)

    def test_skills_table(self, two_occupations, flat_params):
        """Test the per-worker skills table."""
        table = skills_table(two_occupations, flat_params)
        assert list(table.columns) == ['occupation', 'earnings', 'q_ratio', 'x_m', 'x_c']
        assert table['x_c'].iloc[1] == pytest.approx(np.e)
        assert table['x_m'].iloc[1] == pytest.approx(np.e ** 2)

    def test_records_frame_needs_records(self):
        """Test that an empty record list is rejected."""
        with pytest.raises(InvalidInputError):
            records_frame([])


class TestWorkerRecord:
    """Test WorkerRecord validation."""

    def test_from_row(self):
        """Test parsing a CSV row."""
        record = WorkerRecord.from_row({'occupation': 'nurses', 'earnings': '70.5',
                                        'q_ratio': '0.9'}, line=2)
        assert record == WorkerRecord('nurses', 70.5, 0.9)

    def test_from_row_reports_line(self):
        """Test that parse failures carry the line number."""
        with pytest.raises(InvalidRecordError) as error:
            WorkerRecord.from_row({'occupation': 'nurses', 'earnings': '-1', 'q_ratio': '1'},
                                  line=7)
        assert error.value.line == 7
        assert "line 7" in str(error.value)

    def test_from_row_malformed_number(self):
        """Test that non-numeric earnings are rejected."""
        with pytest.raises(InvalidRecordError):
            WorkerRecord.from_row({'occupation': 'x', 'earnings': 'abc', 'q_ratio': '1'}, line=3)


class TestMoments:
    """Test occupation_moments and synthesize_records."""

    def test_two_occupations(self, two_occupations, flat_params):
        """Test means, population variances and covariance on a hand-built sample."""
        moments = occupation_moments(two_occupations, flat_params)
        np.testing.assert_allclose(moments.as_array(), [1.0, 0.5, 1.0, 0.25, 0.5], atol=1e-12)

    def test_synthetic_records_match_targets(self):
        """Test that synthetic records reproduce the target moments at the true parameters."""
        records = synthesize_records(REFERENCE_PARAMS, 12, 15, seed=3)
        moments = occupation_moments(records, REFERENCE_PARAMS)
        np.testing.assert_allclose(moments.as_array(), REFERENCE_MODEL_MOMENTS.as_array(),
                                   atol=1e-10)

    def test_synthetic_records_are_deterministic(self):
        """Test that a seed fixes the sample."""
        first = synthesize_records(REFERENCE_PARAMS, 5, 4, seed=11)
        second = synthesize_records(REFERENCE_PARAMS, 5, 4, seed=11)
        assert first == second
        assert len(first) == 20
        assert first[0].occupation == "occ000"
        assert first[-1].occupation == "occ004"

    def test_synthetic_records_reject_bad_counts(self):
        """Test that at least one occupation is needed."""
        with pytest.raises(InvalidInputError):
            synthesize_records(REFERENCE_PARAMS, 0, 10, seed=0)

    def test_moments_json(self):
        """Test that moments JSON must name every moment."""
        data = REFERENCE_MODEL_MOMENTS.to_json_data()
        assert TargetMoments.from_json_data(data) == REFERENCE_MODEL_MOMENTS
        del data['covariance_log_skills']
        with pytest.raises(InvalidInputError):
            TargetMoments.from_json_data(data)


class TestWinsorizeAndDensity:
    """Test winsorize, the bandwidth rule and kde_density."""

    def test_winsorize_percentiles(self):
        """Test clamping 1..100 at the 1st and 99th percentiles."""
        clipped = winsorize(np.arange(1.0, 101.0))
        assert clipped.min() == pytest.approx(1.99)
        assert clipped.max() == pytest.approx(99.01)
        assert clipped[50] == 51.0

    def test_winsorize_rejects_bad_bounds(self):
        """Test that lower must be below upper."""
        with pytest.raises(InvalidInputError):
            winsorize(np.arange(10.0), lower=50.0, upper=10.0)

    def test_silverman_bandwidth(self):
        """Test the per-axis bandwidth rule."""
        points = np.column_stack([np.arange(10.0), 2.0 * np.arange(10.0)])
        bandwidth = silverman_bandwidth(points)
        factor = (4.0 / (4 * 10)) ** (1.0 / 6)
        np.testing.assert_allclose(bandwidth, points.std(axis=0, ddof=1) * factor)

    def test_kde_unit_mass_and_peak(self):
        """Test that the estimate integrates to one and peaks near the data."""
        grid = Grid.rectangle(20)
        points = np.random.default_rng(0).normal([0.3, 0.6], 0.05, size=(300, 2))
        density = kde_density(points, grid)
        assert grid_operators.integrate(density) == pytest.approx(1.0)
        peak = grid.points[np.argmax(density.values)]
        np.testing.assert_allclose(peak, [0.3, 0.6], atol=0.1)

    def test_kde_needs_two_points(self):
        """Test that a single point is rejected."""
        with pytest.raises(InvalidInputError):
            kde_density(np.array([[0.5, 0.5]]), Grid.rectangle(8))

    def test_kde_dimension_mismatch(self):
        """Test that points must match the grid dimension."""
        with pytest.raises(InvalidInputError):
            kde_density(np.zeros((5, 3)), Grid.rectangle(8))


class TestCalibrate:
    """Test InferenceService.calibrate."""

    def test_recovers_parameters(self):
        """Test that matching exact moments recovers the generating parameters."""
        truth = TechParams(0.24, 0.06, 0.04)
        generator = TargetMoments(0.0, 0.0, 1.2, 0.3, 0.1)
        records = synthesize_records(truth, 20, 10, seed=7, moments=generator)
        targets = occupation_moments(records, truth)
        result = InferenceService(CalibrationConfig()).calibrate(
            records, targets, start=(0.2, 0.04, 0.05))
        assert result.params.alpha == pytest.approx(truth.alpha, rel=0.05)
        assert result.params.beta == pytest.approx(truth.beta, rel=0.05)
        assert result.params.delta == pytest.approx(truth.delta, rel=0.05)
        assert result.objective <= result.start_objective

    def test_infeasible_start(self):
        """Test that a start violating the twist condition is rejected."""
        records = synthesize_records(REFERENCE_PARAMS, 5, 3, seed=0)
        with pytest.raises(StartPointError):
            InferenceService().calibrate(records, REFERENCE_MODEL_MOMENTS, start=(0.1, 0.5, 0.1))

    def test_bad_weights(self):
        """Test that weights must match the number of moments."""
        records = synthesize_records(REFERENCE_PARAMS, 5, 3, seed=0)
        with pytest.raises(InvalidInputError):
            InferenceService().calibrate(records, REFERENCE_MODEL_MOMENTS, weights=[1.0, 1.0])

    def test_result_json(self):
        """Test the calibration result layout."""
        records = synthesize_records(REFERENCE_PARAMS, 5, 3, seed=0)
        config = CalibrationConfig(max_iterations=50, restarts=0)
        result = InferenceService(config).calibrate(records, REFERENCE_MODEL_MOMENTS)
        data = result.to_json_data()
        assert set(data['params']) == {'alpha', 'beta', 'delta'}
        assert data['iterations'] >= 1
