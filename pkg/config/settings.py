"""Configuration settings for the sorting statics engine."""
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


@dataclass
class SolverConfig:
    method: str = "penalized"
    linear_solver: str = "auto"
    tolerance: float = 1e-10
    max_iterations_factor: int = 10
    direct_max_nodes: int = 4096
    psi: Optional[float] = None
    psi_scale: float = 1e4
    penalty_form: str = "b"
    penalty_sweeps: int = 50
    density_floor: float = 1e-8
    iterative_tolerance: float = 1e-6
    ilu_drop_tolerance: float = 1e-8
    ilu_fill_factor: float = 50.0


@dataclass
class CalibrationConfig:
    max_iterations: int = 4000
    restarts: int = 4
    xatol: float = 1e-10
    fatol: float = 1e-18
    barrier: float = 1e12
    winsor_lower: float = 1.0
    winsor_upper: float = 99.0
    bandwidth_scale: float = 1.0


@dataclass
class OracleConfig:
    max_instance_size: int = 2000
    dual_tolerance: float = 1e-9
    gain_sample_size: int = 1000
    gain_steps: Tuple[float, ...] = (0.4, 0.6)
    reference_grid_n: int = 128
    comparison_sample_size: int = 400


@dataclass
class AppConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    grid_n: int = 64
    seed: int = 0
    output_dir: str = "output"
    log_file: str = "sorting_statics.log"


def _optional_float(raw: Optional[str]) -> Optional[float]:
    """Parse an optional float, treating empty strings as unset."""
    if raw is None or raw.strip() == "":
        return None
    return float(raw)


def _float_tuple(raw: str) -> Tuple[float, ...]:
    """Parse a comma separated list of floats."""
    return tuple(float(item) for item in raw.split(",") if item.strip())


def load_config() -> AppConfig:
    """Load configuration from environment variables."""
    solver_config = SolverConfig(
        method=os.getenv("STATICS_SOLVER", "penalized"),
        linear_solver=os.getenv("STATICS_LINEAR_SOLVER", "auto"),
        tolerance=float(os.getenv("STATICS_SOLVER_TOLERANCE", "1e-10")),
        max_iterations_factor=int(os.getenv("STATICS_MAX_ITERATIONS_FACTOR", "10")),
        direct_max_nodes=int(os.getenv("STATICS_DIRECT_MAX_NODES", "4096")),
        psi=_optional_float(os.getenv("STATICS_PSI")),
        psi_scale=float(os.getenv("STATICS_PSI_SCALE", "1e4")),
        penalty_form=os.getenv("STATICS_PENALTY_FORM", "b"),
        penalty_sweeps=int(os.getenv("STATICS_PENALTY_SWEEPS", "50")),
        density_floor=float(os.getenv("STATICS_DENSITY_FLOOR", "1e-8")),
        iterative_tolerance=float(os.getenv("STATICS_ITERATIVE_TOLERANCE", "1e-6")),
        ilu_drop_tolerance=float(os.getenv("STATICS_ILU_DROP_TOLERANCE", "1e-8")),
        ilu_fill_factor=float(os.getenv("STATICS_ILU_FILL_FACTOR", "50"))
    )

    calibration_config = CalibrationConfig(
        max_iterations=int(os.getenv("STATICS_CALIBRATION_MAX_ITERATIONS", "4000")),
        restarts=int(os.getenv("STATICS_CALIBRATION_RESTARTS", "4")),
        winsor_lower=float(os.getenv("STATICS_WINSOR_LOWER", "1.0")),
        winsor_upper=float(os.getenv("STATICS_WINSOR_UPPER", "99.0")),
        bandwidth_scale=float(os.getenv("STATICS_BANDWIDTH_SCALE", "1.0"))
    )

    oracle_config = OracleConfig(
        max_instance_size=int(os.getenv("STATICS_ORACLE_MAX_SIZE", "2000")),
        gain_sample_size=int(os.getenv("STATICS_GAIN_SAMPLE_SIZE", "1000")),
        gain_steps=_float_tuple(os.getenv("STATICS_GAIN_STEPS", "0.4,0.6")),
        reference_grid_n=int(os.getenv("STATICS_REFERENCE_GRID_N", "128")),
        comparison_sample_size=int(os.getenv("STATICS_COMPARISON_SAMPLE_SIZE", "400"))
    )

    return AppConfig(
        solver=solver_config,
        calibration=calibration_config,
        oracle=oracle_config,
        grid_n=int(os.getenv("STATICS_GRID_N", "64")),
        seed=int(os.getenv("STATICS_SEED", "0")),
        output_dir=os.getenv("STATICS_OUTPUT_DIR", "output"),
        log_file=os.getenv("STATICS_LOG_FILE", "sorting_statics.log")
    )
