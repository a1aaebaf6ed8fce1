"""Release checks comparing the numerical engine with exact and brute-force answers.

Every check is a method returning (passed, detail). The suite runs them in a
fixed order, times each one and turns unexpected exceptions into failures.
"""
import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import numpy as np
import pandas as pd
from config.settings import AppConfig
from data_classes.decomposition import DecompositionInput, DecompositionResult
from data_classes.errors import InvalidInputError
from data_classes.flow import TechPath
from data_classes.grid import Grid, MatrixField, ScalarField, VectorField
from data_classes.instance import DiscreteInstance
from data_classes.records import TargetMoments, WorkerRecord
from data_classes.technology import REFERENCE_PARAMS, BilinearTech, TechParams
from services import grid_operators
from services.counterfactual_service import CounterfactualService
from services.flow_service import FlowService
from services.helmholtz_service import HelmholtzService
from services.inference_service import (InferenceService, infer_skill_arrays, infer_skills,
                                        occupation_moments, synthesize_records)
from services.oracle_service import OracleService
from services.sylvester_service import decompose_bilinear, rotation_angle_2d, solve_sylvester

logger = logging.getLogger(__name__)

CheckOutcome = Tuple[bool, str]

MIXED_SIGMA = np.eye(2)
MIXED_DSIGMA = np.array([[0.0, 1.0], [0.0, 0.0]])
MIXED_SD = 0.2
CONVERGENCE_SIZES = (16, 32, 64)


@dataclass
class ValidationResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def to_json_data(self) -> Dict[str, object]:
        return {'name': self.name, 'passed': self.passed, 'detail': self.detail}


class ValidationSuite:
    def __init__(self, config: Optional[AppConfig] = None, seed: int = 0):
        self.config = config or AppConfig()
        self.seed = seed
        self.helmholtz_service = HelmholtzService(self.config.solver)
        self.oracle_service = OracleService(self.config.oracle)
        self._mixed: Dict[Tuple[int, str], Tuple[DecompositionInput, DecompositionResult]] = {}
        self.checks: List[Tuple[str, Callable[[], CheckOutcome]]] = [
            ("sylvester", self.check_sylvester),
            ("rotation_angle", self.check_rotation_angle),
            ("helmholtz_closed_form", self.check_helmholtz_closed_form),
            ("orthogonality_feasibility", self.check_orthogonality_feasibility),
            ("symmetry_dichotomy", self.check_symmetry_dichotomy),
            ("manufactured_solution", self.check_manufactured_solution),
            ("unidimensional", self.check_unidimensional),
            ("second_order_gain", self.check_second_order_gain),
            ("rearrangement_equivalence", self.check_rearrangement_equivalence),
            ("flow_consistency", self.check_flow_consistency),
            ("inference_round_trip", self.check_inference_round_trip),
            ("counterfactual_sanity", self.check_counterfactual_sanity),
        ]

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.checks]

    def run(self, only: Optional[Sequence[str]] = None) -> List[ValidationResult]:
        selected = list(only) if only else self.names
        unknown = sorted(set(selected) - set(self.names))
        if unknown:
            raise InvalidInputError(f"Unknown checks {unknown}, expected some of {self.names}")

        results = []
        for name, check in self.checks:
            if name not in selected:
                continue
            logger.info(f"Running check {name}")
            started = time.perf_counter()
            try:
                passed, detail = check()
            except Exception as e:
                logger.error(f"Check {name} raised {type(e).__name__}: {e}")
                passed, detail = False, f"{type(e).__name__}: {e}"
            elapsed = time.perf_counter() - started
            results.append(ValidationResult(name=name, passed=bool(passed), detail=detail,
                                            seconds=elapsed))
            logger.info(f"Check {name}: {'PASS' if passed else 'FAIL'} ({elapsed:.2f}s)")
        return results

    @staticmethod
    def format_table(results: Sequence[ValidationResult]) -> str:
        frame = pd.DataFrame({
            'check': [r.name for r in results],
            'status': ['PASS' if r.passed else 'FAIL' for r in results],
            'seconds': [f"{r.seconds:.2f}" for r in results],
            'detail': [r.detail for r in results],
        })
        return frame.to_string(index=False)

    def _rng(self, offset: int) -> np.random.Generator:
        return np.random.default_rng(self.seed + offset)

    # bilinear

    def check_sylvester(self) -> CheckOutcome:
        rng = self._rng(1)
        worst = 0.0
        for draw in range(100):
            d = (2, 3, 4)[draw % 3]
            factor = rng.standard_normal((d, d))
            sigma = factor @ factor.T + 0.5 * np.eye(d)
            dsigma = rng.standard_normal((d, d))
            result = decompose_bilinear(BilinearTech(sigma, dsigma))
            R, W = result.R, result.W
            target = dsigma - dsigma.T
            scale = max(1.0, float(np.linalg.norm(dsigma)))
            errors = (
                np.linalg.norm(sigma @ R + R @ sigma - target) / scale,
                np.linalg.norm(R + R.T) / scale,
                np.linalg.norm(W - W.T) / scale,
                np.linalg.norm(dsigma - W - sigma @ R) / scale,
            )
            worst = max(worst, float(max(errors)))
        return worst <= 1e-10, f"max relative residual {worst:.2e} over 100 draws"

    def check_rotation_angle(self) -> CheckOutcome:
        rng = self._rng(2)
        worst = 0.0
        for _ in range(100):
            alpha, delta = rng.uniform(0.5, 2.0, size=2)
            beta = rng.uniform(-0.4, 0.4)
            rates = rng.standard_normal(4)
            tech = BilinearTech.from_entries(alpha, beta, beta, delta, *rates)
            theta = rotation_angle_2d(alpha, beta, beta, delta, *rates)
            R = solve_sylvester(tech)
            worst = max(worst, abs(R[1, 0] - theta), abs(R[0, 1] + theta))
        params = REFERENCE_PARAMS
        reference = rotation_angle_2d(params.alpha, params.beta, params.beta, params.delta,
                                      0.0, 0.0, 0.1, 0.0)
        passed = worst <= 1e-12 and abs(reference - 4.0 / 11.0) <= 1e-9
        return passed, f"max |theta - R21| {worst:.2e}; reference theta {reference:.9f}"

    # helmholtz

    def _mixed_case(self, n: int, solver: str) -> Tuple[DecompositionInput, DecompositionResult]:
        key = (n, solver)
        if key not in self._mixed:
            grid = Grid.disk(n)
            data = DecompositionInput(
                density=grid_operators.gaussian_density(grid, MIXED_SD),
                complementarity=MatrixField.constant(grid, MIXED_SIGMA, spd=True),
                technology_change=VectorField.linear(grid, MIXED_DSIGMA),
                solver=solver)
            self._mixed[key] = (data, self.helmholtz_service.decompose(data))
        return self._mixed[key]

    def check_helmholtz_closed_form(self) -> CheckOutcome:
        exact = decompose_bilinear(BilinearTech(MIXED_SIGMA, MIXED_DSIGMA))
        details = []
        passed = True
        for solver in ("penalized", "direct"):
            gradient_errors, reallocation_errors = [], []
            for n in CONVERGENCE_SIZES:
                data, result = self._mixed_case(n, solver)
                grid, f = data.grid, result.density
                gradient_errors.append(grid_operators.relative_l2_error(
                    result.gradient, VectorField.linear(grid, exact.W), f))
                reallocation_errors.append(grid_operators.relative_l2_error(
                    result.reallocation, VectorField.linear(grid, exact.R), f))
            monotone = (all(a > b for a, b in zip(gradient_errors, gradient_errors[1:]))
                        and all(a > b for a, b in zip(reallocation_errors, reallocation_errors[1:])))
            accurate = gradient_errors[-1] <= 1e-2 and reallocation_errors[-1] <= 2e-2
            passed = passed and monotone and accurate
            details.append(f"{solver}: v {gradient_errors[-1]:.2e}, r {reallocation_errors[-1]:.2e}"
                           f"{'' if monotone else ' (not monotone)'}")
        return passed, "; ".join(details)

    def check_orthogonality_feasibility(self) -> CheckOutcome:
        n = CONVERGENCE_SIZES[-1]
        worst_ratio = worst_divergence = worst_flux = 0.0
        for solver in ("penalized", "direct"):
            _, result = self._mixed_case(n, solver)
            diagnostics = result.diagnostics
            worst_ratio = max(worst_ratio, diagnostics.orthogonality_ratio)
            worst_divergence = max(worst_divergence, diagnostics.divergence_residual)
            worst_flux = max(worst_flux, diagnostics.max_boundary_flux)
        bound = 5.0 / n
        passed = worst_ratio <= 1e-6 and worst_divergence <= bound and worst_flux <= bound
        return passed, (f"orthogonality {worst_ratio:.2e}, divergence {worst_divergence:.2e}, "
                        f"boundary flux {worst_flux:.2e} (bound {bound:.2e})")

    def check_symmetry_dichotomy(self) -> CheckOutcome:
        grid = Grid.disk(CONVERGENCE_SIZES[-1])
        f = grid_operators.gaussian_density(grid, MIXED_SD)

        sigma = np.array([[2.0, 0.3], [0.3, 1.0]])
        symmetric = np.array([[1.0, 0.3], [0.3, 0.5]])
        quadratic = 0.5 * np.einsum('ni,ij,nj->n', grid.points, symmetric, grid.points)
        change = grid_operators.gradient(ScalarField(grid, quadratic))
        result = self.helmholtz_service.decompose(DecompositionInput(
            density=f, complementarity=MatrixField.constant(grid, sigma, spd=True),
            technology_change=change))
        leftover = (grid_operators.weighted_norm(result.reallocation, f)
                    / grid_operators.weighted_norm(change, f))

        rotation = VectorField.linear(grid, np.array([[0.0, 1.0], [-1.0, 0.0]]))
        result = self.helmholtz_service.decompose(DecompositionInput(
            density=f, complementarity=MatrixField.constant(grid, np.eye(2), spd=True),
            technology_change=rotation))
        passthrough = (grid_operators.weighted_norm(result.gradient, f)
                       / grid_operators.weighted_norm(rotation, f))
        passed = leftover <= 1e-6 and passthrough <= 1e-2
        return passed, f"symmetric |r|/|A| {leftover:.2e}; antisymmetric |v|/|A| {passthrough:.2e}"

    def _manufactured_error(self, n: int) -> float:
        """Max node error of the potential for -lap(w) = pi^2 cos(pi x1) on the unit square."""
        grid = Grid.rectangle(n)
        source = ScalarField.from_function(grid, lambda x1, x2: np.pi ** 2 * np.cos(np.pi * x1))
        data = DecompositionInput(
            density=grid_operators.uniform_density(grid),
            complementarity=MatrixField.constant(grid, np.eye(2), spd=True),
            technology_change=VectorField.zeros(grid),
            density_change=source, solver="direct")
        result = self.helmholtz_service.decompose(data)
        exact = np.cos(np.pi * grid.points[:, 0])
        return float(np.abs(result.potential.values - exact).max())

    def check_manufactured_solution(self) -> CheckOutcome:
        coarse, fine = self._manufactured_error(64), self._manufactured_error(128)
        order = float(np.log2(coarse / fine)) if fine > 0 else float('inf')
        passed = fine <= 5e-3 and order >= 1.0
        return passed, f"max error {fine:.2e} at n=128, observed order {order:.2f}"

    def check_unidimensional(self) -> CheckOutcome:
        grid = Grid.interval(32)
        change = VectorField(grid, grid.points ** 2)
        data = DecompositionInput(
            density=grid_operators.gaussian_density(grid, 0.3, [0.5]),
            complementarity=MatrixField.constant(grid, np.array([[2.0]]), spd=True),
            technology_change=change)
        result = self.helmholtz_service.decompose(data)
        passed = (not np.any(result.reallocation.values)
                  and np.array_equal(result.gradient.values, change.values))
        return passed, f"max |r| {np.abs(result.reallocation.values).max():.1e}"

    # oracle

    def check_second_order_gain(self) -> CheckOutcome:
        seeds = [self.seed + 800 + k for k in range(5)]
        report = self.oracle_service.monte_carlo_gain(MIXED_SIGMA, MIXED_DSIGMA, seeds)
        symmetric = self.oracle_service.monte_carlo_gain(
            MIXED_SIGMA, np.array([[0.5, 0.0], [0.0, 0.2]]), seeds[:1])
        error = report.relative_error
        error_text = "n/a" if error is None else f"{error:.1%}"
        passed = (error is not None and error <= 0.25
                  and min(report.gains) >= -1e-9
                  and max(report.max_duality_gap, symmetric.max_duality_gap) <= 1e-9
                  and max(abs(g) for g in symmetric.gains) <= 1e-9)
        return passed, (f"coefficient {report.coefficient:.4f} vs {report.reference:.4f} "
                        f"(error {error_text}); symmetric gains {symmetric.gains}")

    def check_rearrangement_equivalence(self) -> CheckOutcome:
        rng = self._rng(9)
        worst = 0.0
        for draw in range(100):
            output = rng.standard_normal((6, 6))
            perturbed = output + 0.5 * rng.standard_normal((6, 6))
            instance = DiscreteInstance.from_output(output, seed=draw)
            report = self.oracle_service.verify_rearrangement_equivalence(instance, perturbed)
            worst = max(worst, abs(report.gap),
                        abs(report.enumerated_output - report.direct_output))
        return worst <= 1e-9, f"max output gap {worst:.2e} over 100 instances"

    # flow

    def check_flow_consistency(self) -> CheckOutcome:
        service = FlowService(self.config, self.helmholtz_service, self.oracle_service)
        m0 = np.array([[2.0, 0.3], [0.3, 1.0]])
        rate = np.array([[0.1, 0.5], [-0.3, 0.2]])

        first = service.integrate_flow(TechPath(m0, rate, horizon=1.0, steps=50)).steps[0]
        first_error = float(np.abs(first.R - solve_sylvester(BilinearTech(m0, rate))).max())

        endpoints = [service.integrate_flow(TechPath(m0, rate, horizon=1.0, steps=k)).final.T
                     for k in (50, 100, 200)]
        ratio = (np.linalg.norm(endpoints[0] - endpoints[1])
                 / np.linalg.norm(endpoints[1] - endpoints[2]))

        still = service.integrate_flow(TechPath(m0, np.zeros((2, 2)), horizon=1.0, steps=20))
        drift = max(float(np.abs(step.T - np.eye(2)).max() + np.abs(step.W - m0).max())
                    for step in still.steps)
        passed = first_error <= 1e-14 and 1.5 <= ratio <= 2.6 and drift <= 1e-14
        return passed, (f"first step {first_error:.1e}, step-halving ratio {ratio:.2f}, "
                        f"zero-rate drift {drift:.1e}")

    # inference

    def check_inference_round_trip(self) -> CheckOutcome:
        flat = TechParams(REFERENCE_PARAMS.alpha, 0.0, REFERENCE_PARAMS.delta)
        a, d = flat.alpha, flat.delta
        rows = [((0.5, 1.0), 1.0 / (a + d), 1.0 / (a + d)),
                ((1.0, 1.0), 2.0 / (a + d), 2.0 / (a + d)),
                ((0.5, 2.0), 1.0 / (a + 4 * d), 4.0 / (a + 4 * d))]
        table_error = 0.0
        for (w, q), cognitive_sq, manual_sq in rows:
            manual, cognitive = infer_skills(WorkerRecord("row", w, q), flat)
            table_error = max(table_error, abs(cognitive ** 2 / cognitive_sq - 1),
                              abs(manual ** 2 / manual_sq - 1))

        truth = TechParams(0.24, 0.06, 0.04)
        generator = TargetMoments(0.0, 0.0, 1.2, 0.3, 0.1)
        records = synthesize_records(truth, 50, 200, seed=self.seed + 11, moments=generator)
        earnings = np.array([r.earnings for r in records])
        ratios = np.array([r.q_ratio for r in records])
        manual, cognitive = infer_skill_arrays(earnings, ratios, truth)
        rebuilt = truth.alpha * cognitive ** 2 + 2 * truth.beta * cognitive * manual \
            + truth.delta * manual ** 2
        reconstruction = float(np.abs(rebuilt / (2.0 * earnings) - 1.0).max())

        police = infer_skills(WorkerRecord("police", 64.0, np.exp(-0.1)), REFERENCE_PARAMS)
        physicians = infer_skills(WorkerRecord("physicians", 184.0, np.exp(-0.2)), REFERENCE_PARAMS)
        ordinal = physicians[0] > police[0] and physicians[1] > police[1]

        targets = occupation_moments(records, truth)
        fitted = InferenceService(self.config.calibration).calibrate(
            records, targets, start=(0.2, 0.04, 0.05)).params
        recovery = max(abs(fitted.alpha / truth.alpha - 1), abs(fitted.beta / truth.beta - 1),
                       abs(fitted.delta / truth.delta - 1))
        passed = table_error <= 1e-12 and reconstruction <= 1e-10 and ordinal and recovery <= 0.05
        return passed, (f"table error {table_error:.1e}, reconstruction {reconstruction:.1e}, "
                        f"ordinal {ordinal}, calibration error {recovery:.2%}")

    def check_counterfactual_sanity(self) -> CheckOutcome:
        records = synthesize_records(REFERENCE_PARAMS, 50, 200, seed=self.seed + 12)
        service = CounterfactualService(self.config, self.helmholtz_service)
        rate = 0.1
        result = service.run(records, REFERENCE_PARAMS, rate, rate)
        change = result.technology_change.values
        points = result.grid.points
        cognitive_error = float(np.abs(change[:, 1] - rate * (points[:, 0] + points[:, 1])).max())
        manual_zero = not np.any(change[:, 0])
        passed = manual_zero and cognitive_error <= 1e-12 and result.rotation > 0
        return passed, (f"manual component zero {manual_zero}, cognitive error "
                        f"{cognitive_error:.1e}, rotation {result.rotation:.3e}")
