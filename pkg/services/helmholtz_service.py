"""Grid decomposition of a technological change into earnings and reallocation parts.

Vector unknowns are stacked component-major, z = [v_1; v_2], and component k
of node x is read as the value on the face between x and x + h_k e_k. Faces
that leave the domain carry no weight, which imposes the no-flux boundary
condition naturally. The density-weighted quadratic form B is assembled from
C_f = f C^-1 with each diagonal entry averaged onto its face.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg
from config.settings import SolverConfig
from data_classes.decomposition import DecompositionInput, DecompositionResult, Diagnostics
from data_classes.errors import (AssemblyError, CompatibilityError, InvalidInputError,
                                 NotAGradientError, SolverDivergenceError,
                                 UnsupportedDimensionError)
from data_classes.grid import Grid, MatrixField, ScalarField, VectorField
from services import grid_operators

logger = logging.getLogger(__name__)

GMRES_RESTART = 50


def assemble_curl_penalty(grid: Grid) -> sparse.csr_matrix:
    """N x 2N operator whose row at x is the scaled circulation around the cell at x.

    Rows of nodes without a complete forward cell are empty. With equal
    spacings the four entries are -1, +1 on v_1 at x and x + e_2 and +1, -1
    on v_2 at x and x + e_1; in general row(x) = -sqrt(h1 h2) curl2d(v)(x).
    """
    if grid.dim != 2:
        raise UnsupportedDimensionError("The curl penalty needs a 2-D grid")
    n = grid.size
    h1, h2 = grid.spacing
    mean_h = np.sqrt(h1 * h2)
    s1, s2 = h1 / mean_h, h2 / mean_h
    nodes = np.flatnonzero(grid.complete_cells)
    east = grid.forward[0][nodes]
    north = grid.forward[1][nodes]
    rows = np.concatenate([nodes, nodes, nodes, nodes])
    cols = np.concatenate([nodes, north, n + nodes, n + east])
    data = np.concatenate([np.full(len(nodes), -s1), np.full(len(nodes), s1),
                           np.full(len(nodes), s2), np.full(len(nodes), -s2)])
    return sparse.csr_matrix((data, (rows, cols)), shape=(n, 2 * n))


def assemble_boundary_closure(grid: Grid) -> sparse.csr_matrix:
    """Rows tying every face-less component to its backward neighbour (or to 0)."""
    n = grid.size
    rows, cols, data = [], [], []
    row = 0
    for k in range(grid.dim):
        for node in np.flatnonzero(grid.forward[k] < 0):
            rows.append(row)
            cols.append(k * n + node)
            data.append(1.0)
            behind = grid.backward[k][node]
            if behind >= 0:
                rows.append(row)
                cols.append(k * n + behind)
                data.append(-1.0)
            row += 1
    return sparse.csr_matrix((data, (rows, cols)), shape=(row, grid.dim * n))


def output_gain(r: VectorField, C: MatrixField, f: ScalarField) -> float:
    """Second-order output gain 1/2 sum r^T C r f over the grid."""
    r.grid.check_same(C.grid)
    r.grid.check_same(f.grid)
    quadratic = np.einsum('ni,nij,nj->n', r.values, C.values, r.values)
    return float(0.5 * np.sum(quadratic * f.values) * r.grid.cell_volume)


def _stack(values: np.ndarray) -> np.ndarray:
    return values.T.reshape(-1)


def _unstack(z: np.ndarray, grid: Grid) -> np.ndarray:
    return z.reshape(grid.dim, grid.size).T


@dataclass
class _Discretization:
    grid: Grid
    face_mask: np.ndarray
    blocks: np.ndarray
    weight: sparse.csr_matrix
    edge_gradient: sparse.csr_matrix


class HelmholtzService:
    def __init__(self, config: Optional[SolverConfig] = None):
        self.config = config or SolverConfig()

    # ------------------------------------------------------------------
    # assembly
    # ------------------------------------------------------------------

    def _face_mask(self, grid: Grid) -> np.ndarray:
        return np.column_stack([grid.forward[k] >= 0 for k in range(grid.dim)])

    def _edge_gradient(self, grid: Grid) -> sparse.csr_matrix:
        """Forward differences on faces inside the domain, empty rows elsewhere."""
        n = grid.size
        rows, cols, data = [], [], []
        for k in range(grid.dim):
            nodes = np.flatnonzero(grid.forward[k] >= 0)
            h = grid.spacing[k]
            rows += [k * n + nodes, k * n + nodes]
            cols += [nodes, grid.forward[k][nodes]]
            data += [np.full(len(nodes), -1.0 / h), np.full(len(nodes), 1.0 / h)]
        return sparse.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(grid.dim * n, n))

    def _discretize(self, f: ScalarField, C: MatrixField) -> _Discretization:
        """Assemble the face-weighted quadratic form of C_f = f C^-1."""
        grid = f.grid
        if not C.is_spd():
            raise AssemblyError("Complementarity is not symmetric positive definite on every node")
        weighted = f.values[:, None, None] * np.linalg.inv(C.values)
        weighted = 0.5 * (weighted + np.swapaxes(weighted, 1, 2))

        mask = self._face_mask(grid)
        scale = np.ones((grid.size, grid.dim))
        for k in range(grid.dim):
            nodes = np.flatnonzero(mask[:, k])
            ahead = grid.forward[k][nodes]
            face = 0.5 * (weighted[nodes, k, k] + weighted[ahead, k, k])
            scale[nodes, k] = np.sqrt(face / weighted[nodes, k, k])
        blocks = scale[:, :, None] * weighted * scale[:, None, :]
        blocks = blocks * mask[:, :, None] * mask[:, None, :]

        n = grid.size
        rows, cols, data = [], [], []
        for k in range(grid.dim):
            for l in range(grid.dim):
                rows.append(k * n + np.arange(n))
                cols.append(l * n + np.arange(n))
                data.append(blocks[:, k, l])
        weight = sparse.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(grid.dim * n, grid.dim * n))
        weight.eliminate_zeros()
        return _Discretization(grid=grid, face_mask=mask, blocks=blocks, weight=weight,
                               edge_gradient=self._edge_gradient(grid))

    def default_psi(self, blocks: np.ndarray, grid: Grid, squared: bool = False) -> float:
        """psi_scale times the median block eigenvalue over the squared mean spacing."""
        eigenvalues = np.linalg.eigvalsh(blocks).ravel()
        positive = eigenvalues[eigenvalues > 0]
        median = float(np.median(positive)) if positive.size else 1.0
        if squared:
            median = median ** 2
        return self.config.psi_scale * median / grid.mean_spacing ** 2

    # ------------------------------------------------------------------
    # linear algebra
    # ------------------------------------------------------------------

    def _use_direct(self, size: int) -> bool:
        choice = self.config.linear_solver
        if choice == "direct":
            return True
        if choice == "cg":
            return False
        return size <= self.config.direct_max_nodes

    def _conjugate_gradient(self, matrix: sparse.spmatrix, rhs: np.ndarray,
                            tolerance: float, max_iterations: Optional[int] = None,
                            x0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, int]:
        """Jacobi-preconditioned conjugate gradients with a divergence check."""
        if not np.any(rhs):
            return np.zeros_like(rhs), 0
        diagonal = matrix.diagonal()
        if np.any(diagonal <= 0):
            raise AssemblyError("System matrix has a nonpositive diagonal entry")
        preconditioner = sparse.diags(1.0 / diagonal)
        limit = max_iterations or self.config.max_iterations_factor * matrix.shape[0]
        iterations = [0]

        def count(_):
            iterations[0] += 1

        solution, info = sparse_linalg.cg(matrix, rhs, x0=x0, rtol=tolerance, maxiter=limit,
                                          M=preconditioner, callback=count)
        residual = float(np.linalg.norm(rhs - matrix @ solution) / np.linalg.norm(rhs))
        if info < 0:
            raise AssemblyError(f"Conjugate gradients rejected the system (info={info})")
        if info > 0:
            raise SolverDivergenceError("Conjugate gradients did not converge", residual,
                                        iterations[0])
        logger.debug(f"CG converged in {iterations[0]} iterations, residual {residual:.3e}")
        return solution, iterations[0]

    def _solve_neumann(self, operator: sparse.spmatrix, rhs: np.ndarray, tolerance: float,
                       max_iterations: Optional[int] = None,
                       x0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, Dict[str, float]]:
        """Solve a singular Neumann system whose kernel is the constants, returning mean zero."""
        size = operator.shape[0]
        rhs = rhs - rhs.mean()
        if self._use_direct(size):
            ones = sparse.csr_matrix(np.ones((size, 1)))
            bordered = sparse.bmat([[operator, ones], [ones.T, None]], format="csc")
            solution = sparse_linalg.spsolve(bordered, np.append(rhs, 0.0))
            if not np.all(np.isfinite(solution)):
                raise AssemblyError("Bordered Neumann system is singular")
            potential = solution[:size]
            info = {'linear_solver': 'direct', 'iterations': 0}
        else:
            start = None if x0 is None else np.asarray(x0, dtype=float) - np.mean(x0)
            potential, iterations = self._conjugate_gradient(operator, rhs, tolerance,
                                                             max_iterations, start)
            info = {'linear_solver': 'cg', 'iterations': iterations}
        scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
        info['residual'] = float(np.linalg.norm(operator @ potential - rhs) / scale)
        return potential - potential.mean(), info

    # ------------------------------------------------------------------
    # public operations
    # ------------------------------------------------------------------

    def decompose(self, data: DecompositionInput,
                  initial_guess: Optional[np.ndarray] = None) -> DecompositionResult:
        """Dispatch on the solver named in the input."""
        if data.grid.dim == 1 and data.density_change is None:
            return self._unidimensional(data)
        if data.solver == "direct" or data.density_change is not None:
            return self.solve_poisson_direct(data, initial_guess)
        return self.gradient_regression(data, initial_guess)

    def gradient_regression(self, data: DecompositionInput,
                            initial_guess: Optional[np.ndarray] = None) -> DecompositionResult:
        """Best C_f-weighted gradient fit of the technological change by curl penalization."""
        if data.density_change is not None:
            raise InvalidInputError(
                "Gradient regression has no distribution-change term; use the direct solver")
        if data.grid.dim == 1:
            return self._unidimensional(data)
        grid = data.grid
        tolerance = data.tolerance or self.config.tolerance
        f = grid_operators.normalize_density(data.density, self.config.density_floor)
        disc = self._discretize(f, data.complementarity)

        squared = self.config.penalty_form == "b_squared"
        weight = disc.weight @ disc.weight if squared else disc.weight
        psi = data.psi or self.config.psi or self.default_psi(disc.blocks, grid, squared)
        constraints = sparse.vstack([assemble_curl_penalty(grid),
                                     assemble_boundary_closure(grid)]).tocsr()
        system = (weight + psi * (constraints.T @ constraints)).tocsc()
        target = _stack(data.technology_change.values)
        base_rhs = weight @ target
        logger.info(f"Gradient regression on {grid.size} nodes, psi={psi:.3e}, "
                    f"form={self.config.penalty_form}")

        solver_info: Dict = {}
        solve = self._penalized_solver(system, tolerance, data.max_iterations, solver_info)
        if solver_info['linear_solver'] == "gmres":
            tolerance = max(tolerance, self.config.iterative_tolerance)
        multipliers = np.zeros(constraints.shape[0])
        z = None if initial_guess is None else np.asarray(initial_guess, dtype=float)
        violation = np.inf
        sweeps = 0
        for sweeps in range(self.config.penalty_sweeps + 1):
            z = solve(base_rhs - constraints.T @ multipliers, z)
            defect = constraints @ z
            violation = float(np.linalg.norm(defect) / max(np.linalg.norm(z), np.finfo(float).tiny))
            logger.debug(f"Penalty sweep {sweeps}: constraint violation {violation:.3e}")
            if violation <= tolerance:
                break
            multipliers = multipliers + psi * defect
        if violation > tolerance and self.config.penalty_sweeps > 0:
            logger.warning(f"Curl constraint violation {violation:.3e} above tolerance "
                           f"after {sweeps} sweeps")

        v = VectorField(grid, _unstack(z, grid))
        potential = self.recover_potential(v, tolerance=max(10 * tolerance, 10 * violation))
        info = {'method': 'penalized', 'psi': psi, 'sweeps': sweeps,
                'constraint_violation': violation, 'threads': 1, **solver_info}
        return self._finish(data, f, disc, v, potential, info)

    def _penalized_solver(self, system: sparse.csc_matrix, tolerance: float,
                          max_iterations: Optional[int], info: Dict) -> Callable:
        """Factor once with sparse LU; the iterative mode uses ILU-preconditioned GMRES.

        The penalty makes the system stiff, so residuals below roughly
        eps * psi * |K|^2 / |B| are out of reach; the iterative tolerance is
        floored at iterative_tolerance.
        """
        if self.config.linear_solver != "cg":
            try:
                factor = sparse_linalg.splu(system)
            except RuntimeError as e:
                raise AssemblyError(f"Penalized system is singular: {e}") from e
            info.update(linear_solver='direct', iterations=0)

            def solve(rhs, _):
                solution = factor.solve(rhs)
                if not np.all(np.isfinite(solution)):
                    raise AssemblyError("Penalized solve produced non-finite values")
                return solution
            return solve

        try:
            incomplete = sparse_linalg.spilu(system, drop_tol=self.config.ilu_drop_tolerance,
                                             fill_factor=self.config.ilu_fill_factor)
        except RuntimeError as e:
            raise AssemblyError(f"Incomplete factorization failed: {e}") from e
        preconditioner = sparse_linalg.LinearOperator(system.shape, matvec=incomplete.solve)
        rtol = max(tolerance, self.config.iterative_tolerance)
        limit = max_iterations or self.config.max_iterations_factor * system.shape[0]
        info.update(linear_solver='gmres', iterations=0)

        def iterate(rhs, start):
            if not np.any(rhs):
                return np.zeros_like(rhs)
            counter = [0]

            def count(_):
                counter[0] += 1

            solution, status = sparse_linalg.gmres(
                system, rhs, x0=start, rtol=rtol, restart=GMRES_RESTART,
                maxiter=max(1, limit // GMRES_RESTART), M=preconditioner,
                callback=count, callback_type="pr_norm")
            info['iterations'] += counter[0]
            residual = float(np.linalg.norm(rhs - system @ solution) / np.linalg.norm(rhs))
            if status < 0:
                raise AssemblyError(f"GMRES rejected the penalized system (info={status})")
            if status > 0:
                raise SolverDivergenceError("GMRES did not converge", residual, counter[0])
            logger.debug(f"GMRES converged in {counter[0]} iterations, residual {residual:.3e}")
            return solution
        return iterate

    def solve_poisson_direct(self, data: DecompositionInput,
                             initial_guess: Optional[np.ndarray] = None) -> DecompositionResult:
        """Solve div(C_f (A - grad w)) = fdot with no-flux boundary and mean-zero w."""
        grid = data.grid
        tolerance = data.tolerance or self.config.tolerance
        f = grid_operators.normalize_density(data.density, self.config.density_floor)
        source = np.zeros(grid.size)
        if data.density_change is not None:
            source = np.asarray(data.density_change.values, dtype=float)
            mass = float(np.sum(source) * grid.cell_volume)
            scale = max(1.0, float(np.sum(np.abs(source)) * grid.cell_volume))
            if abs(mass) > 1e-8 * scale:
                raise CompatibilityError(f"Distribution change integrates to {mass:.3e}, not 0")
            source = source - source.mean()
        disc = self._discretize(f, data.complementarity)

        gradient_op = disc.edge_gradient
        operator = (gradient_op.T @ disc.weight @ gradient_op).tocsr()
        rhs = gradient_op.T @ (disc.weight @ _stack(data.technology_change.values)) + source
        logger.info(f"Direct Poisson solve on {grid.size} nodes"
                    f"{' with distribution change' if data.density_change is not None else ''}")
        values, info = self._solve_neumann(operator, rhs, tolerance, data.max_iterations,
                                           initial_guess)
        potential = ScalarField(grid, values)
        v = grid_operators.gradient(potential)
        info.update(method='direct', threads=1)
        label = "net_displacement" if data.density_change is not None else "reallocation"
        return self._finish(data, f, disc, v, potential, info, label)

    def recover_potential(self, v: VectorField, tolerance: Optional[float] = None) -> ScalarField:
        """Mean-zero least-squares potential of a curl-free field."""
        grid = v.grid
        limit = tolerance if tolerance is not None else 10 * self.config.tolerance
        size = float(np.linalg.norm(v.values))
        if size == 0:
            return ScalarField.constant(grid, 0.0)
        if grid.dim == 2:
            curl = grid_operators.curl2d(v).values
            relative_curl = grid.mean_spacing * float(np.linalg.norm(curl)) / size
            if relative_curl > limit:
                raise NotAGradientError("Field is not a discrete gradient", relative_curl)

        gradient_op = self._edge_gradient(grid)
        mask = self._face_mask(grid)
        target = _stack(np.where(mask, v.values, 0.0))
        operator = (gradient_op.T @ gradient_op).tocsr()
        values, info = self._solve_neumann(operator, gradient_op.T @ target, self.config.tolerance)
        fit = gradient_op @ values - target
        logger.debug(f"Recovered potential, relative fit residual "
                     f"{np.linalg.norm(fit) / np.linalg.norm(target):.3e}")
        return ScalarField(grid, values)

    def _unidimensional(self, data: DecompositionInput) -> DecompositionResult:
        """On a line every field is a gradient, so the change passes through entirely."""
        grid = data.grid
        f = grid_operators.normalize_density(data.density, self.config.density_floor)
        v = VectorField(grid, data.technology_change.values)
        potential = self.recover_potential(v)
        r = VectorField.zeros(grid)
        diagnostics = Diagnostics(orthogonality=0.0, divergence_residual=0.0,
                                  max_boundary_flux=0.0, curl_residual=0.0, output_gain=0.0)
        return DecompositionResult(gradient=v, potential=potential, reallocation=r,
                                   diagnostics=diagnostics, method=data.solver, density=f,
                                   solver_info={'method': 'unidimensional', 'threads': 1})

    def _finish(self, data: DecompositionInput, f: ScalarField, disc: _Discretization,
                v: VectorField, potential: ScalarField, info: Dict,
                label: str = "reallocation") -> DecompositionResult:
        """Residual reallocation plus diagnostics in the solver's own quadrature."""
        grid = data.grid
        C = data.complementarity
        change = data.technology_change
        r = C.solve(VectorField(grid, change.values - v.values))

        z_v = _stack(v.values)
        z_rest = _stack(change.values) - z_v
        flux = disc.weight @ z_rest
        volume = grid.cell_volume
        orthogonality = float(z_v @ flux) * volume
        scale = np.sqrt(max(z_v @ (disc.weight @ z_v), 0.0) * max(z_rest @ flux, 0.0)) * volume

        curl_residual = 0.0
        if grid.dim == 2:
            curl = grid_operators.curl2d(v).values
            curl_residual = float(np.sqrt(np.sum(curl ** 2) * volume))

        diagnostics = Diagnostics(
            orthogonality=orthogonality,
            divergence_residual=grid_operators.divergence_residual(
                VectorField(grid, _unstack(flux, grid)), data.density_change),
            max_boundary_flux=grid_operators.max_boundary_flux(r, f),
            curl_residual=curl_residual,
            output_gain=output_gain(r, C, f),
            orthogonality_scale=float(scale))
        logger.info(f"Decomposition finished: gain={diagnostics.output_gain:.4e}, "
                    f"orthogonality ratio={diagnostics.orthogonality_ratio:.2e}")
        return DecompositionResult(gradient=v, potential=potential, reallocation=r,
                                   diagnostics=diagnostics, method=info.get('method', data.solver),
                                   label=label, density=f, solver_info=info)

    def feasibility_report(self, r: VectorField, f: ScalarField,
                           fdot: Optional[ScalarField] = None) -> Dict[str, float]:
        return grid_operators.feasibility_report(r, f, fdot)

    def penalty_curve(self, data: DecompositionInput,
                      factors: Sequence[float] = (1.0, 10.0, 100.0)) -> List[Dict[str, float]]:
        """Relative change of v when the penalty weight is scaled up from its reference value."""
        f = grid_operators.normalize_density(data.density, self.config.density_floor)
        disc = self._discretize(f, data.complementarity)
        reference = data.psi or self.config.psi or self.default_psi(
            disc.blocks, data.grid, self.config.penalty_form == "b_squared")
        baseline = None
        curve = []
        for factor in factors:
            scaled = DecompositionInput(
                density=data.density, complementarity=data.complementarity,
                technology_change=data.technology_change, psi=reference * factor,
                solver="penalized", tolerance=data.tolerance,
                max_iterations=data.max_iterations)
            v = self.gradient_regression(scaled).gradient
            if baseline is None:
                baseline = v
            change = grid_operators.relative_l2_error(v, baseline, f)
            curve.append({'psi': reference * factor, 'relative_change': change})
            logger.debug(f"psi={reference * factor:.3e}: relative change {change:.3e}")
        return curve
