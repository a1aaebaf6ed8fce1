"""
Unit tests for the configuration layer.
Tests cover dataclass defaults and environment variable overrides.
"""

import os
import pytest
from unittest.mock import patch

from config.settings import (AppConfig, CalibrationConfig, OracleConfig, SolverConfig,
                             _float_tuple, _optional_float, load_config)


@pytest.fixture
def clean_environment(monkeypatch):
    """Remove every STATICS_ variable so defaults apply."""
    for key in list(os.environ):
        if key.startswith("STATICS_"):
            monkeypatch.delenv(key, raising=False)


class TestDefaults:
    """Test configuration defaults."""

    def test_solver_defaults(self):
        """Test the solver defaults."""
        config = SolverConfig()
        assert config.method == "penalized"
        assert config.linear_solver == "auto"
        assert config.tolerance == 1e-10
        assert config.psi is None
        assert config.penalty_form == "b"

    def test_oracle_defaults(self):
        """Test the oracle defaults."""
        config = OracleConfig()
        assert config.max_instance_size == 2000
        assert config.dual_tolerance == 1e-9
        assert config.gain_steps == (0.4, 0.6)

    def test_app_config_groups_sections(self):
        """Test that the application config nests independent section objects."""
        first, second = AppConfig(), AppConfig()
        assert isinstance(first.calibration, CalibrationConfig)
        assert first.solver is not second.solver
        assert first.grid_n == 64
        assert first.log_file == "sorting_statics.log"


class TestParsingHelpers:
    """Test the small parsing helpers."""

    def test_optional_float_empty(self):
        """Test that missing and blank values stay unset."""
        assert _optional_float(None) is None
        assert _optional_float("  ") is None

    def test_optional_float_value(self):
        """Test parsing a number."""
        assert _optional_float("2.5") == 2.5

    def test_float_tuple(self):
        """Test parsing a comma separated list."""
        assert _float_tuple("0.05, 0.1,") == (0.05, 0.1)


class TestLoadConfig:
    """Test load_config."""

    def test_load_config_defaults(self, clean_environment):
        """Test loading without any variables set."""
        config = load_config()
        assert config.solver.method == "penalized"
        assert config.seed == 0
        assert config.output_dir == "output"

    def test_load_config_overrides(self, clean_environment):
        """Test that environment variables override defaults."""
        overrides = {
            "STATICS_SOLVER": "direct",
            "STATICS_PSI": "1e3",
            "STATICS_GRID_N": "32",
            "STATICS_SEED": "7",
            "STATICS_GAIN_STEPS": "0.2,0.3",
            "STATICS_WINSOR_LOWER": "2.5",
        }
        with patch.dict("os.environ", overrides):
            config = load_config()
        assert config.solver.method == "direct"
        assert config.solver.psi == 1e3
        assert config.grid_n == 32
        assert config.seed == 7
        assert config.oracle.gain_steps == (0.2, 0.3)
        assert config.calibration.winsor_lower == 2.5

    def test_load_config_rejects_bad_number(self, clean_environment):
        """Test that malformed numbers raise ValueError."""
        with patch.dict("os.environ", {"STATICS_GRID_N": "many"}):
            with pytest.raises(ValueError):
                load_config()

    def test_load_config_iterative_settings(self, clean_environment):
        """Test the iterative solver variables."""
        overrides = {
            "STATICS_LINEAR_SOLVER": "cg",
            "STATICS_ITERATIVE_TOLERANCE": "1e-7",
            "STATICS_ILU_DROP_TOLERANCE": "1e-6",
        }
        with patch.dict("os.environ", overrides):
            config = load_config()
        assert config.solver.linear_solver == "cg"
        assert config.solver.iterative_tolerance == 1e-7
        assert config.solver.ilu_drop_tolerance == 1e-6
        assert config.solver.ilu_fill_factor == 50.0
