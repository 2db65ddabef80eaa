"""Projected iterative solvers for the discrete obstacle problem.

Two problem forms are supported on a :class:`~obslab.grid.GridSpec`:

* general form: minimize the discrete Dirichlet energy
  ``sum h^n |grad_h v|^2 / 2`` over fields with fixed boundary values and
  ``v >= phi``;
* normalized form: minimize ``sum h^n (|grad_h u|^2 / 2 + u)`` over
  ``u >= 0`` with fixed nonnegative boundary values; the linear term makes
  the interior KKT system the discrete version of
  ``Delta u = 1 on {u > 0}, u >= 0``.

Both are convex quadratic programs over a box constraint, solved either by
projected SOR (node-wise Gauss-Seidel minimization followed by projection,
red-black ordering) or by projected gradient (full-field step then
projection, with Nesterov momentum and adaptive restart). Inputs are nodal
samples; smoothness classes of the continuum data have no discrete meaning
here and are not represented.

The stopping rule is the standard complementarity residual in max-norm:
``max |min(u - constraint, kkt)|`` over interior nodes, where ``kkt`` is
``1 - lap_h u`` (normalized) or ``-lap_h u`` (general).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .grid import GridError, GridSpec, ScalarField, discrete_laplacian


class SolverError(RuntimeError):
    """Solver failure."""


class IterationLimitError(SolverError):
    """Iteration budget exhausted before the residual tolerance was met."""

    def __init__(self, message: str, residual_history: np.ndarray):
        super().__init__(message)
        self.residual_history = residual_history


@dataclass(frozen=True)
class GeneralObstacle:
    """Minimize the Dirichlet energy above an obstacle field.

    ``boundary`` is a full-shape nodal array of which only the boundary
    ring is read; it must dominate the obstacle there.
    """

    obstacle: ScalarField
    boundary: np.ndarray

    linear_coefficient = 0.0

    def constraint_values(self) -> np.ndarray:
        return self.obstacle.values


@dataclass(frozen=True)
class Normalized:
    """The reduced problem: Delta u = 1 on {u > 0}, u >= 0, u = g on the ring."""

    boundary: np.ndarray

    linear_coefficient = 1.0

    def constraint_values(self) -> np.ndarray:
        return None  # zero constraint, realized lazily against the grid shape


@dataclass(frozen=True)
class ObstacleProblemSpec:
    grid: GridSpec
    form: GeneralObstacle | Normalized

    def __post_init__(self) -> None:
        boundary = np.asarray(self.form.boundary, dtype=float)
        if boundary.shape != self.grid.shape:
            raise GridError(
                f"boundary array shape {boundary.shape} != grid shape {self.grid.shape}"
            )
        if not np.isfinite(boundary).all():
            raise GridError("boundary data contains non-finite values")
        ring = _boundary_mask(self.grid.shape)
        if isinstance(self.form, Normalized):
            if (boundary[ring] < 0.0).any():
                raise GridError("normalized form requires g >= 0 on boundary nodes")
        else:
            obstacle = self.form.obstacle
            if obstacle.grid != self.grid:
                raise GridError("obstacle field is not on the problem grid")
            obstacle.require_finite("obstacle")
            if (boundary[ring] < obstacle.values[ring] - 1e-14).any():
                raise GridError("boundary data must satisfy f >= phi on boundary nodes")

    @property
    def is_normalized(self) -> bool:
        return isinstance(self.form, Normalized)

    def constraint(self) -> np.ndarray:
        values = self.form.constraint_values()
        if values is None:
            return np.zeros(self.grid.shape)
        return values

    def boundary_values(self) -> np.ndarray:
        return np.asarray(self.form.boundary, dtype=float)


def normalized_problem(grid: GridSpec, boundary: np.ndarray) -> ObstacleProblemSpec:
    return ObstacleProblemSpec(grid, Normalized(boundary=boundary))


def general_problem(
    grid: GridSpec, obstacle: ScalarField, boundary: np.ndarray
) -> ObstacleProblemSpec:
    return ObstacleProblemSpec(grid, GeneralObstacle(obstacle=obstacle, boundary=boundary))


PSOR = "psor"
PROJECTED_GRADIENT = "projected_gradient"


@dataclass(frozen=True)
class SolverConfig:
    method: str = PSOR
    omega: float = 1.8
    tol: float = 1e-8
    max_iterations: int = 200_000
    record_energy: bool = False

    def __post_init__(self) -> None:
        if self.method not in (PSOR, PROJECTED_GRADIENT):
            raise SolverError(f"unknown method {self.method!r}")
        if not 0.0 < self.omega < 2.0:
            raise SolverError(f"relaxation omega must lie in (0, 2), got {self.omega}")
        if not self.tol > 0.0:
            raise SolverError(f"tolerance must be positive, got {self.tol}")
        if self.max_iterations < 1:
            raise SolverError("max_iterations must be >= 1")


@dataclass(frozen=True)
class SolveResult:
    solution: ScalarField
    iterations: int
    residual_history: np.ndarray
    final_energy: float
    energy_history: np.ndarray | None = dataclass_field(default=None)


def _boundary_mask(shape: tuple[int, ...]) -> np.ndarray:
    mask = np.ones(shape, dtype=bool)
    mask[(slice(1, -1),) * len(shape)] = False
    return mask


def _neighbor_sum_interior(u: np.ndarray) -> np.ndarray:
    nd = u.ndim
    acc = None
    for a in range(nd):
        lo = tuple(slice(0, -2) if b == a else slice(1, -1) for b in range(nd))
        hi = tuple(slice(2, None) if b == a else slice(1, -1) for b in range(nd))
        term = u[lo] + u[hi]
        acc = term if acc is None else acc + term
    return acc


def _interior_parity(shape: tuple[int, ...]) -> np.ndarray:
    grids = np.meshgrid(*(np.arange(1, m - 1) for m in shape), indexing="ij")
    return sum(grids) % 2 == 0


def _projected_residual_interior(
    u: np.ndarray, psi_core: np.ndarray, source: float, h2: float
) -> float:
    nd = u.ndim
    core = u[(slice(1, -1),) * nd]
    lap = (_neighbor_sum_interior(u) - 2.0 * nd * core) / h2
    kkt = source - lap
    gap = core - psi_core
    return float(np.max(np.abs(np.minimum(gap, kkt))))


def default_initial_guess(problem: ObstacleProblemSpec) -> ScalarField:
    """Admissible start: a few plain Gauss-Seidel sweeps toward the harmonic
    extension of the boundary data, clamped to the constraint."""
    grid = problem.grid
    boundary = problem.boundary_values()
    ring = _boundary_mask(grid.shape)
    u = np.full(grid.shape, float(np.mean(boundary[ring])))
    u[ring] = boundary[ring]
    core = (slice(1, -1),) * grid.dimension
    nd = grid.dimension
    parity = _interior_parity(grid.shape)
    for _ in range(10):
        for color in (parity, ~parity):
            gs = _neighbor_sum_interior(u) / (2.0 * nd)
            u[core] = np.where(color, gs, u[core])
    psi = problem.constraint()
    u = np.maximum(u, psi)
    u[ring] = boundary[ring]
    return ScalarField(grid, u)


def constraint_initial_guess(problem: ObstacleProblemSpec) -> ScalarField:
    """Admissible start equal to the constraint in the interior."""
    grid = problem.grid
    u = problem.constraint().copy()
    ring = _boundary_mask(grid.shape)
    u[ring] = problem.boundary_values()[ring]
    return ScalarField(grid, u)


def solve(
    problem: ObstacleProblemSpec,
    config: SolverConfig = SolverConfig(),
    initial_guess: ScalarField | None = None,
) -> SolveResult:
    """Minimize the discrete energy subject to the constraint.

    Returns once the projected residual max-norm drops to ``config.tol``;
    raises :class:`IterationLimitError` (carrying the residual history)
    if ``config.max_iterations`` sweeps do not get there.
    """
    grid = problem.grid
    nd = grid.dimension
    h2 = grid.h * grid.h
    source = problem.form.linear_coefficient
    psi = problem.constraint()
    core = (slice(1, -1),) * nd
    psi_core = psi[core]
    ring = _boundary_mask(grid.shape)
    boundary = problem.boundary_values()

    if initial_guess is None:
        u = default_initial_guess(problem).values.copy()
    else:
        if initial_guess.grid != grid:
            raise GridError("initial guess is not on the problem grid")
        u = initial_guess.values.copy()
        u[ring] = boundary[ring]
        u[core] = np.maximum(u[core], psi_core)

    residuals: list[float] = []
    energies: list[float] = [] if config.record_energy else None

    if config.method == PSOR:
        iterations = _psor_loop(
            u, psi_core, source, h2, nd, config, residuals, energies, problem
        )
    else:
        iterations = _projected_gradient_loop(
            u, psi_core, source, h2, nd, config, residuals, energies, problem
        )

    history = np.array(residuals)
    solution = ScalarField(grid, u).require_finite("solution")
    energy = dirichlet_energy(solution, problem)
    result = SolveResult(
        solution=solution,
        iterations=iterations,
        residual_history=history,
        final_energy=energy,
        energy_history=np.array(energies) if energies is not None else None,
    )
    if history[-1] > config.tol:
        raise IterationLimitError(
            f"no convergence in {config.max_iterations} iterations "
            f"(residual {history[-1]:.3e} > tol {config.tol:.3e})",
            history,
        )
    return result


def _psor_loop(u, psi_core, source, h2, nd, config, residuals, energies, problem) -> int:
    core = (slice(1, -1),) * nd
    parity = _interior_parity(u.shape)
    omega = config.omega
    c0 = source * h2 / (2.0 * nd)
    for sweep in range(1, config.max_iterations + 1):
        for color in (parity, ~parity):
            gs = _neighbor_sum_interior(u) / (2.0 * nd) - c0
            cand = np.maximum((1.0 - omega) * u[core] + omega * gs, psi_core)
            u[core] = np.where(color, cand, u[core])
        res = _projected_residual_interior(u, psi_core, source, h2)
        residuals.append(res)
        if energies is not None:
            energies.append(dirichlet_energy(ScalarField(problem.grid, u), problem))
        if res <= config.tol:
            return sweep
    return config.max_iterations


def _projected_gradient_loop(
    u, psi_core, source, h2, nd, config, residuals, energies, problem
) -> int:
    core = (slice(1, -1),) * nd
    step = h2 / (4.0 * nd)  # 1 / lambda_max bound of the scaled Hessian
    x = u[core].copy()
    x_prev = x.copy()
    y = u  # full array whose interior holds the extrapolated point
    t = 1.0
    for iteration in range(1, config.max_iterations + 1):
        lap = (_neighbor_sum_interior(y) - 2.0 * nd * y[core]) / h2
        x_new = np.maximum(y[core] + step * (lap - source), psi_core)
        # adaptive restart on the gradient-mapping sign
        if np.vdot(y[core] - x_new, x_new - x) > 0.0:
            t = 1.0
            y[core] = x_new
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y[core] = x_new + ((t - 1.0) / t_next) * (x_new - x)
            t = t_next
        x_prev, x = x, x_new
        u_probe = u.copy()
        u_probe[core] = x
        res = _projected_residual_interior(u_probe, psi_core, source, h2)
        residuals.append(res)
        if energies is not None:
            energies.append(dirichlet_energy(ScalarField(problem.grid, u_probe), problem))
        if res <= config.tol:
            u[core] = x
            return iteration
    u[core] = x
    return config.max_iterations


def _trapezoid_weights(m: int) -> np.ndarray:
    w = np.ones(m)
    w[0] = w[-1] = 0.5
    return w


def dirichlet_energy(field: ScalarField, problem: ObstacleProblemSpec) -> float:
    """The discrete energy the solver minimizes.

    Gradient part: forward-difference edge sums with trapezoid weights in
    the cross directions (so affine fields integrate exactly); normalized
    form adds the trapezoid-weighted linear term ``sum h^n w u``. Interior
    stationarity of this functional is exactly the 2n+1-point
    complementarity system.
    """
    if field.grid != problem.grid:
        raise GridError("field is not on the problem grid")
    grid = field.grid
    u = field.values
    nd = grid.dimension
    h = grid.h
    hn = h**nd
    axis_weights = [_trapezoid_weights(m) for m in grid.shape]
    total = 0.0
    for a in range(nd):
        diff = np.diff(u, axis=a) / h
        w = np.ones(())
        for b in range(nd):
            wb = np.ones(grid.shape[b] - 1) if b == a else axis_weights[b]
            shape = [1] * nd
            shape[b] = -1
            w = w * wb.reshape(shape)
        total += float(np.sum(w * diff * diff)) * hn / 2.0
    if problem.form.linear_coefficient != 0.0:
        w = np.ones(())
        for b in range(nd):
            shape = [1] * nd
            shape[b] = -1
            w = w * axis_weights[b].reshape(shape)
        total += problem.form.linear_coefficient * float(np.sum(w * u)) * hn
    return total


def complementarity_residual(field: ScalarField, problem: ObstacleProblemSpec) -> float:
    """Max-norm of ``min(u - constraint, kkt)`` over interior nodes.

    Zero iff discrete complementarity holds: admissibility, the one-sided
    equation, and their pointwise product vanishing.
    """
    if field.grid != problem.grid:
        raise GridError("field is not on the problem grid")
    grid = field.grid
    core = (slice(1, -1),) * grid.dimension
    lap = discrete_laplacian(field).values[core]
    kkt = problem.form.linear_coefficient - lap
    gap = field.values[core] - problem.constraint()[core]
    return float(np.max(np.abs(np.minimum(gap, kkt))))
