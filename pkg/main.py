import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import Any, Dict, List, Optional
import pandas as pd
from config.settings import AppConfig, load_config
from data_classes.errors import InvalidInputError, NumericalError
from data_classes.grid import VectorField
from data_classes.records import REFERENCE_DATA_MOMENTS, TargetMoments, WorkerRecord
from data_classes.technology import REFERENCE_PARAMS, BilinearTech, TechParams
from services import grid_operators
from services.counterfactual_service import CounterfactualService
from services.flow_service import FlowService
from services.helmholtz_service import HelmholtzService
from services.inference_service import (InferenceService, occupation_moments, skills_table,
                                        synthesize_records)
from services.sylvester_service import decompose_bilinear
from tools import field_io
from tools.output_writer import FORMATS, OutputWriter, to_json_text
from tools.record_io import read_records
from tools.scenario_loader import ScenarioConfig
from tools.validation_suite import ValidationSuite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_INTERNAL = 4

# every random draw derives from --seed plus a fixed per-stage offset
SEED_OFFSETS = {'records': 0, 'oracle': 101, 'validation': 202}

SYNTHETIC_OCCUPATIONS = 50
SYNTHETIC_WORKERS = 200


class StaticsArgumentParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Scenario or parameter JSON file')
    common.add_argument('--seed', type=int, help='Base random seed')
    common.add_argument('--out', help='Output directory')
    common.add_argument('--solver', choices=['penalized', 'direct'],
                        help='Decomposition solver')
    common.add_argument('--psi', type=float, help='Curl penalty weight')
    common.add_argument('--n', type=int, help='Grid nodes per axis')
    common.add_argument('--format', choices=list(FORMATS), default='csv', dest='output_format',
                        help='Table output format')
    common.add_argument('-v', '--verbose', action='store_true',
                        help='Enable verbose logging output')

    parser = StaticsArgumentParser(description='Comparative statics of multidimensional sorting')
    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True

    commands.add_parser('sylvester', parents=[common],
                        help='Closed-form reallocation and earnings slope of a bilinear change')
    decompose = commands.add_parser('decompose', parents=[common],
                                    help='Grid decomposition of a scenario into earnings and reallocation')
    decompose.add_argument('--psi-sweep', type=float, nargs='+', metavar='FACTOR',
                           help='Also report the change in v when psi is scaled by each factor')

    counterfactual = commands.add_parser('counterfactual', parents=[common],
                                         help='Cognitive skill-biased change on estimated skills')
    counterfactual.add_argument('--records', help='Worker records CSV')
    counterfactual.add_argument('--params', help='Technology parameters JSON')
    counterfactual.add_argument('--gamma-dot', type=float, default=0.1)
    counterfactual.add_argument('--delta-dot', type=float, default=0.1)

    calibrate = commands.add_parser('calibrate', parents=[common],
                                    help='Fit alpha, beta, delta to occupation moments')
    calibrate.add_argument('--records', help='Worker records CSV')
    calibrate.add_argument('--params', help='Parameters used to synthesize records')
    calibrate.add_argument('--targets', help='Target moments JSON')
    calibrate.add_argument('--start', type=float, nargs=3, metavar=('ALPHA', 'BETA', 'DELTA'))

    infer = commands.add_parser('infer', parents=[common], help='Infer skills from records')
    infer.add_argument('--records', required=True, help='Worker records CSV')
    infer.add_argument('--params', help='Technology parameters JSON')

    flow = commands.add_parser('flow', parents=[common],
                               help='Integrate a path of bilinear technologies')
    flow.add_argument('--grid-regime', action='store_true',
                      help='Fit each step from a grid decomposition instead of the closed form')
    flow.add_argument('--oracle-sample', type=int,
                      help='Compare the endpoint with a discrete matching of this size')

    validate = commands.add_parser('validate', parents=[common], help='Run the release checks')
    validate.add_argument('--only', nargs='+', metavar='CHECK', help='Run only these checks')

    return parser.parse_args(argv)


def setup_logging(verbose=False, log_file='sorting_statics.log'):
    """Setup logging configuration based on verbosity level."""
    log_level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=log_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler(sys.stderr)
        ]
    )


def apply_overrides(config: AppConfig, args: argparse.Namespace) -> AppConfig:
    """Command-line flags win over environment settings for one invocation."""
    solver = config.solver
    if args.solver is not None:
        solver = replace(solver, method=args.solver)
    if args.psi is not None:
        if not args.psi > 0:
            raise InvalidInputError(f"--psi must be positive, got {args.psi}")
        solver = replace(solver, psi=args.psi)
    if args.n is not None and args.n < 2:
        raise InvalidInputError(f"--n must be at least 2, got {args.n}")
    return replace(config, solver=solver,
                   seed=config.seed if args.seed is None else args.seed,
                   grid_n=config.grid_n if args.n is None else args.n,
                   output_dir=config.output_dir if args.out is None else args.out)


def _load_json(path: str, label: str) -> Dict[str, Any]:
    try:
        with open(path, encoding='utf-8') as handle:
            data = json.load(handle)
    except FileNotFoundError as e:
        raise InvalidInputError(f"{label} file {path} does not exist") from e
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"{label} file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise InvalidInputError(f"{label} file {path} must hold a JSON object")
    return data


def _require_config(args: argparse.Namespace) -> str:
    if not args.config:
        raise InvalidInputError(f"The {args.command} command needs --config")
    return args.config


def _load_params(path: Optional[str]) -> TechParams:
    if path is None:
        return REFERENCE_PARAMS
    return TechParams.from_json_data(_load_json(path, "Parameters"))


def _load_records(path: Optional[str], params: TechParams, config: AppConfig) -> List[WorkerRecord]:
    """Records from CSV, or a synthetic sample at the given parameters."""
    if path is not None:
        return read_records(path)
    seed = config.seed + SEED_OFFSETS['records']
    logger.info(f"No records given; synthesizing {SYNTHETIC_OCCUPATIONS} occupations "
                f"x {SYNTHETIC_WORKERS} workers with seed {seed}")
    return synthesize_records(params, SYNTHETIC_OCCUPATIONS, SYNTHETIC_WORKERS, seed)


def cmd_sylvester(args: argparse.Namespace, config: AppConfig) -> int:
    tech = BilinearTech.from_json_data(_load_json(_require_config(args), "Technology"))
    result = decompose_bilinear(tech)
    print(to_json_text(result.to_json_data()))
    return EXIT_OK


def cmd_decompose(args: argparse.Namespace, config: AppConfig) -> int:
    scenario = ScenarioConfig.from_file(_require_config(args), config.output_dir,
                                        args.output_format)
    grid = scenario.build_grid(args.n)
    data = scenario.build_input(grid, config.solver, solver=args.solver, psi=args.psi)
    result = HelmholtzService(config.solver).decompose(data)

    writer = OutputWriter(scenario.output_dir, scenario.output_format)
    writer.write_table(field_io.decomposition_frame(data, result), "fields")
    writer.write_json(result.diagnostics.to_json_data(), "diagnostics")

    summary: Dict[str, Any] = {'grid': grid.to_json_data(), 'nodes': grid.size,
                               'method': result.method, 'label': result.label,
                               'solver_info': result.solver_info}
    tech = scenario.bilinear_technology()
    if tech is not None and grid.dim == 2 and data.density_change is None:
        exact = decompose_bilinear(tech)
        summary['closed_form_relative_error'] = {
            'gradient': grid_operators.relative_l2_error(
                result.gradient, VectorField.linear(grid, exact.W), result.density),
            'reallocation': grid_operators.relative_l2_error(
                result.reallocation, VectorField.linear(grid, exact.R), result.density),
        }
    if args.psi_sweep:
        factors = [1.0] + [factor for factor in args.psi_sweep if factor != 1.0]
        curve = HelmholtzService(config.solver).penalty_curve(data, factors)
        writer.write_table(pd.DataFrame(curve), "penalty_curve")
        summary['penalty_curve'] = curve
    writer.write_json(summary, "summary")
    logger.info(f"Wrote {len(writer.written)} files to {writer.directory}")
    return EXIT_OK


def cmd_counterfactual(args: argparse.Namespace, config: AppConfig) -> int:
    params = _load_params(args.params)
    records = _load_records(args.records, params, config)
    result = CounterfactualService(config).run(records, params, args.gamma_dot, args.delta_dot)

    writer = OutputWriter(config.output_dir, args.output_format)
    decomposition = result.decomposition
    writer.write_table(field_io.vector_frame(result.technology_change), "technology_change")
    writer.write_table(field_io.vector_frame(decomposition.reallocation), "reallocation")
    writer.write_table(field_io.vector_frame(decomposition.gradient), "earnings_gradient")
    surface = field_io.scalar_frame(result.density, "f")
    surface['w'] = result.earnings.values
    surface['wdot'] = result.earnings_change.values
    surface['pct_change'] = result.percent_change.values
    surface['zero_change'] = result.zero_change.astype(int)
    writer.write_table(surface, "earnings_change")
    writer.write_json({
        'params': params.to_json_data(),
        'gamma_dot': args.gamma_dot,
        'delta_dot': args.delta_dot,
        'workers': len(records),
        'grid': result.grid.to_json_data(),
        'density_mode': result.mode,
        'rotation': result.rotation,
        'diagnostics': decomposition.diagnostics.to_json_data(),
        'solver_info': decomposition.solver_info,
    }, "summary")
    logger.info(f"Counterfactual rotation at the density mode: {result.rotation:.4e}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace, config: AppConfig) -> int:
    records = _load_records(args.records, _load_params(args.params), config)
    targets = REFERENCE_DATA_MOMENTS
    if args.targets:
        targets = TargetMoments.from_json_data(_load_json(args.targets, "Targets"))
    result = InferenceService(config.calibration).calibrate(records, targets, start=args.start)
    output = result.to_json_data()
    output['targets'] = targets.to_json_data()
    OutputWriter(config.output_dir, args.output_format).write_json(output, "calibration")
    print(to_json_text(result.params.to_json_data()))
    return EXIT_OK


def cmd_infer(args: argparse.Namespace, config: AppConfig) -> int:
    params = _load_params(args.params)
    records = read_records(args.records)
    writer = OutputWriter(config.output_dir, args.output_format)
    writer.write_table(skills_table(records, params), "skills")
    writer.write_json(occupation_moments(records, params).to_json_data(), "moments")
    logger.info(f"Inferred skills for {len(records)} records")
    return EXIT_OK


def cmd_flow(args: argparse.Namespace, config: AppConfig) -> int:
    scenario = ScenarioConfig.from_file(_require_config(args), config.output_dir,
                                        args.output_format)
    path = scenario.build_path()
    density = None
    if args.grid_regime:
        grid = scenario.build_grid(args.n)
        density = scenario.build_density(grid, config.solver.density_floor)
    service = FlowService(config)
    trajectory = service.integrate_flow(path, density)

    writer = OutputWriter(scenario.output_dir, scenario.output_format)
    writer.write_table(trajectory.to_dataframe(), "trajectory")
    if trajectory.markers:
        rows = [[k, step.t, index, *point]
                for k, (step, points) in enumerate(zip(trajectory.steps, trajectory.markers))
                for index, point in enumerate(points)]
        columns = ['step', 't', 'marker'] + [f"x{k + 1}" for k in range(path.dim)]
        writer.write_table(pd.DataFrame(rows, columns=columns), "markers")

    summary: Dict[str, Any] = {'regime': trajectory.regime, 'steps': path.steps,
                               'horizon': path.horizon,
                               'final_defect': trajectory.final.defect,
                               'defect_excess_time': trajectory.defect_excess_time,
                               'rearrangement': trajectory.rearrangement}
    if args.oracle_sample:
        comparison = service.compare_with_oracle(trajectory, args.oracle_sample,
                                                 seed=config.seed + SEED_OFFSETS['oracle'])
        summary['oracle'] = comparison.to_json_data()
    writer.write_json(summary, "summary")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace, config: AppConfig) -> int:
    suite = ValidationSuite(config, seed=config.seed + SEED_OFFSETS['validation'])
    results = suite.run(args.only)
    print(suite.format_table(results))
    passed = all(result.passed for result in results)
    OutputWriter(config.output_dir, args.output_format).write_json(
        {'passed': passed, 'results': [result.to_json_data() for result in results]},
        "validation")
    if not passed:
        failed = [result.name for result in results if not result.passed]
        logger.error(f"Validation failed: {', '.join(failed)}")
        return EXIT_NUMERICAL
    return EXIT_OK


COMMANDS = {
    'sylvester': cmd_sylvester,
    'decompose': cmd_decompose,
    'counterfactual': cmd_counterfactual,
    'calibrate': cmd_calibrate,
    'infer': cmd_infer,
    'flow': cmd_flow,
    'validate': cmd_validate,
}


def main(argv: Optional[List[str]] = None) -> int:
    # Parse command line arguments
    args = parse_arguments(argv)

    try:
        config = load_config()
    except ValueError as e:
        print(f"Invalid configuration: {e}", file=sys.stderr)
        return EXIT_INVALID_INPUT

    # Setup logging based on verbosity
    setup_logging(verbose=args.verbose, log_file=config.log_file)

    try:
        config = apply_overrides(config, args)
        logger.info(f"Running {args.command} with seed {config.seed}")
        return COMMANDS[args.command](args, config)
    except InvalidInputError as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_INVALID_INPUT
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except Exception:
        logger.exception(f"Unexpected error while running {args.command}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
