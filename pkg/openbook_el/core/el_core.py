"""
Euclidean empirical likelihood for a multivariate mean.

log R_n(x) = max sum_i log(n p_i) subject to sum_i p_i = 1, p_i >= 0 and
sum_i p_i (x_i - x) = 0. The problem is solved in the dual: with
w_i = 1 + lambda^T (x_i - x) the optimal weights are p_i = 1 / (n w_i), and
lambda minimizes the convex function -sum_i log*(w_i), where log* is the
logarithm continued below 1/n by its second order Taylor polynomial so that
the objective is finite everywhere.

Before Newton runs, the data are centered and rotated onto their principal
axes. Directions with (relative) singular value below ``rank_tol`` carry no
spread: the target must match the data mean along them, otherwise the target
is outside the affine hull. The remaining coordinates are whitened, and the
position of the target relative to the convex hull (outside, on the boundary,
inside) is decided before the dual is solved.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import optimize

from openbook_el.core.geometry import InvalidInputError, ShapeMismatchError
from openbook_el.util.logger import logger


class Status(Enum):
    """Feasibility status of an EL evaluation"""
    INTERIOR = 'interior'
    BOUNDARY = 'boundary'
    INFEASIBLE = 'infeasible'
    UNCONVERGED = 'unconverged'

    @property
    def solved(self) -> bool:
        """Whether the result carries finite weights, converged or not"""
        return self in (Status.INTERIOR, Status.UNCONVERGED)


@dataclass(frozen=True)
class SolverOptions:
    """
    Options of the dual Newton solver.

    :param gtol: Convergence when the dual gradient norm is below gtol * n
    :param max_iter: Maximum number of Newton iterations
    :param divergence: Multiplier norm (whitened coordinates) treated as divergence
    :param rank_tol: Relative singular value below which a direction is degenerate
    :param mean_tol: Allowed target offset along degenerate directions, relative to data scale
    :param max_halvings: Maximum step halvings per line search
    :param ftol: Squared Newton decrement, relative to n + |F|, below which steps skip the line search
    """
    gtol: float = 1e-10
    max_iter: int = 100
    divergence: float = 1e8
    rank_tol: float = 1e-12
    mean_tol: float = 1e-10
    max_halvings: int = 60
    ftol: float = 1e-10

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> 'SolverOptions':
        if not data:
            return cls()
        known = {name: data[name] for name in cls.__dataclass_fields__ if name in data}
        unknown = set(data) - set(known)
        if unknown:
            raise InvalidInputError(f"Unknown solver options {sorted(unknown)}")
        return cls(**known)


DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True)
class ELResult:
    """
    Outcome of one EL evaluation.

    ``weights`` is None for infeasible targets. For boundary targets the
    weights are the degenerate limit (mass on the face containing the target)
    and ``log_ratio`` is -inf.
    """
    log_ratio: float
    weights: Optional[np.ndarray]
    multiplier: np.ndarray
    status: Status
    iterations: int = 0

    @property
    def statistic(self) -> float:
        """-2 log R_n, in [0, inf]"""
        if self.log_ratio == -math.inf:
            return math.inf
        return max(0.0, -2.0 * self.log_ratio)

    @property
    def feasible(self) -> bool:
        return self.status.solved

    def to_dict(self, include_weights: bool = False) -> dict:
        data = {
            'log_ratio': float(self.log_ratio),
            'statistic': self.statistic,
            'multiplier': [float(v) for v in self.multiplier],
            'status': self.status.value,
            'iterations': int(self.iterations),
        }
        if include_weights:
            data['weights'] = None if self.weights is None else [float(v) for v in self.weights]
        return data


def _as_matrix(data, target) -> tuple:
    target = np.atleast_1d(np.asarray(target, dtype=float)).reshape(-1)
    matrix = np.asarray(data, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    if matrix.ndim != 2:
        raise ShapeMismatchError(f"Data must be a list of vectors, got an array of shape {matrix.shape}")
    if matrix.shape[0] < 1:
        raise InvalidInputError("Empirical likelihood needs at least one observation")
    if matrix.shape[1] != target.size:
        raise ShapeMismatchError(f"Data vectors have length {matrix.shape[1]}, target has length {target.size}")
    if not (np.all(np.isfinite(matrix)) and np.all(np.isfinite(target))):
        raise InvalidInputError("Data and target must be finite")
    return matrix, target


def _uniform_result(n: int, q: int) -> ELResult:
    return ELResult(0.0, np.full(n, 1.0 / n), np.zeros(q), Status.INTERIOR, 0)


def _infeasible_result(q: int, iterations: int = 0) -> ELResult:
    return ELResult(-math.inf, None, np.zeros(q), Status.INFEASIBLE, iterations)


def _log_star(w: np.ndarray, n: int):
    """Values, first and second derivatives of log* at w"""
    cut = 1.0 / n
    low = w < cut
    safe = np.where(low, 1.0, w)
    nw = n * w
    value = np.where(low, math.log(cut) - 1.5 + nw * (2.0 - nw / 2.0), np.log(safe))
    first = np.where(low, n * (2.0 - nw), 1.0 / safe)
    second = np.where(low, -float(n) ** 2, -1.0 / safe ** 2)
    return value, first, second


def _hull_status(y: np.ndarray) -> tuple:
    """
    Position of the origin relative to the convex hull of the rows of y.

    :return: (status, weights) with weights a feasible point of the moment
        constraint for BOUNDARY, None otherwise
    """
    n, r = y.shape
    if r == 1:
        column = y[:, 0]
        lo, hi = column.min(), column.max()
        if lo > 0 or hi < 0:
            return Status.INFEASIBLE, None
        if lo == 0 or hi == 0:
            face = (column == 0).astype(float)
            return Status.BOUNDARY, face / face.sum()
        return Status.INTERIOR, None

    # Maximize t subject to p_i >= t, sum p = 1, y^T p = 0; variables (p, t)
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    a_ub = np.hstack((-np.eye(n), np.ones((n, 1))))
    b_ub = np.zeros(n)
    a_eq = np.vstack((np.hstack((y.T, np.zeros((r, 1)))), np.append(np.ones(n), 0.0)))
    b_eq = np.append(np.zeros(r), 1.0)
    bounds = [(0, None)] * n + [(None, 1.0)]
    result = optimize.linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                              bounds=bounds, method='highs')
    if result.status == 2:
        return Status.INFEASIBLE, None
    if result.status != 0:
        logger.solver(f"Hull test LP ended with status {result.status}: {result.message}")
        return Status.INFEASIBLE, None
    if result.x[-1] > 1e-9 / n:
        return Status.INTERIOR, None
    weights = np.clip(result.x[:n], 0.0, None)
    return Status.BOUNDARY, weights / weights.sum()


def el_log_ratio(data, target, opts: SolverOptions = DEFAULT_OPTIONS) -> ELResult:
    """
    Profile EL log-ratio for the mean of ``data`` at ``target``.

    :param data: n vectors of length q (an (n, q) array; a flat array means q = 1)
    :param target: Vector of length q
    :param opts: Solver options
    :return: ELResult; the multiplier is expressed in the original coordinates
    """
    matrix, target = _as_matrix(data, target)
    n, q = matrix.shape
    if q == 0:
        return _uniform_result(n, 0)

    diff = matrix - target
    if n == 1:
        if np.all(diff == 0):
            return _uniform_result(1, q)
        return _infeasible_result(q)

    center = matrix.mean(axis=0)
    _, singular, rotation = np.linalg.svd(matrix - center, full_matrices=True)
    singular = np.concatenate((singular, np.zeros(q - singular.size)))
    scale = float(np.max(np.abs(matrix)))
    scale = scale if scale > 0 else 1.0
    largest = float(singular.max())
    keep = singular > opts.rank_tol * largest if largest > 0 else np.zeros(q, dtype=bool)

    offset = rotation[~keep] @ (target - center)
    if offset.size and np.max(np.abs(offset)) > opts.mean_tol * scale:
        logger.solver(f"Target leaves the affine hull of the data by {np.max(np.abs(offset)):.3e}")
        return _infeasible_result(q)
    if not np.any(keep):
        return _uniform_result(n, q)

    # Whitened coordinates of x_i - target along the spread directions
    whitener = rotation[keep] * (math.sqrt(n) / singular[keep])[:, None]
    y = diff @ whitener.T

    status, boundary_weights = _hull_status(y)
    if status is Status.INFEASIBLE:
        return _infeasible_result(q)
    if status is Status.BOUNDARY:
        return ELResult(-math.inf, boundary_weights, np.zeros(q), Status.BOUNDARY, 0)

    lam, iterations, converged = _dual_newton(y, opts)
    if converged and iterations == 0:
        # Target is the sample mean
        return _uniform_result(n, q)
    if not converged:
        if np.linalg.norm(lam) > opts.divergence:
            logger.solver("Dual multiplier diverged; declaring the target infeasible")
            return _infeasible_result(q, iterations)
        logger.solver(f"Dual Newton stopped after {iterations} iterations without converging")

    w = 1.0 + y @ lam
    if np.any(w <= 0):
        logger.solver("Dual solution left the domain of the logarithm; declaring the target infeasible")
        return _infeasible_result(q, iterations)
    weights = 1.0 / (n * w)
    weights = weights / weights.sum()
    log_ratio = float(np.sum(np.log(n * weights)))
    status = Status.INTERIOR if converged else Status.UNCONVERGED
    return ELResult(min(log_ratio, 0.0), weights, whitener.T @ lam, status, iterations)


def _dual_newton(y: np.ndarray, opts: SolverOptions) -> tuple:
    """
    Damped Newton on F(lam) = -sum log*(1 + lam^T y_i).

    Stops when the gradient norm is below gtol * n. Once the squared Newton
    decrement is below ftol * (n + |F|) the Armijo test compares round-off,
    so full steps are taken without a line search.

    :return: (lam, iterations, converged)
    """
    n, r = y.shape
    lam = np.zeros(r)

    def objective(point):
        value, _, _ = _log_star(1.0 + y @ point, n)
        return -float(np.sum(value))

    current = objective(lam)
    for iteration in range(1, opts.max_iter + 1):
        _, first, second = _log_star(1.0 + y @ lam, n)
        grad = -(first @ y)
        if np.linalg.norm(grad) <= opts.gtol * n:
            return lam, iteration - 1, True
        hess = (y * (-second)[:, None]).T @ y
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        slope = float(grad @ step)
        if -slope <= opts.ftol * (n + abs(current)):
            # Objective differences are round-off here; take the full Newton step
            lam = lam + step
            current = objective(lam)
            continue
        t = 1.0
        for _ in range(opts.max_halvings):
            candidate = objective(lam + t * step)
            if candidate <= current + 1e-4 * t * slope:
                break
            t /= 2.0
        else:
            logger.solver(f"Line search stalled at iteration {iteration}")
            return lam, iteration, False
        lam = lam + t * step
        current = candidate
        if np.linalg.norm(lam) > opts.divergence:
            return lam, iteration, False

    _, first, _ = _log_star(1.0 + y @ lam, n)
    converged = np.linalg.norm(first @ y) <= opts.gtol * n
    return lam, opts.max_iter, bool(converged)


Functional = Union[Sequence[float], Callable[[np.ndarray], float]]


def el_log_ratio_with_equality(data, target, extra: Sequence[Functional],
                               opts: SolverOptions = DEFAULT_OPTIONS) -> ELResult:
    """
    EL log-ratio with additional zero-mean constraints.

    Each entry of ``extra`` is either the list of its values on the n
    observations or a callable evaluated on each observation vector; its
    weighted mean is constrained to 0. The problem is el_log_ratio on the
    data augmented by these columns, with target coordinates 0.

    :param data: n vectors of length q (q may be 0: pass an (n, 0) array or None)
    :param target: Vector of length q
    :param extra: Functionals constrained to have weighted mean 0
    """
    target = np.atleast_1d(np.asarray(target, dtype=float)).reshape(-1)
    columns = []
    if data is None:
        lengths = {len(f) for f in extra if not callable(f)}
        if len(lengths) != 1:
            raise InvalidInputError("Cannot infer the sample size without data")
        matrix = np.zeros((lengths.pop(), 0))
    else:
        matrix = np.asarray(data, dtype=float)
        if matrix.ndim == 1:
            matrix = matrix.reshape(-1, 1) if target.size == 1 else np.zeros((matrix.size, 0))
    for functional in extra:
        if callable(functional):
            values = np.array([float(functional(row)) for row in matrix])
        else:
            values = np.asarray(functional, dtype=float).reshape(-1)
        if values.size != matrix.shape[0]:
            raise ShapeMismatchError(
                f"Extra functional has {values.size} values for {matrix.shape[0]} observations")
        columns.append(values)
    augmented = np.column_stack([matrix] + columns) if columns else matrix
    augmented_target = np.concatenate((target, np.zeros(len(columns))))
    return el_log_ratio(augmented, augmented_target, opts)
