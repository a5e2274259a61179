"""
Empirical likelihood on the open book.

Off the spine the problem is Euclidean after folding the sample onto the
page of the target. On the spine, the moment condition becomes one equality
for the tangential part plus the inequalities sum_i p_i <F_j(x_i), e_j> <= 0
for every page j. The inequality problem is solved by a case split: if the
solution with the equality only already satisfies every inequality strictly
it is optimal, otherwise the optimum lies on one of the per-page equality
problems and the best of them is taken.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from openbook_el.core.el_core import DEFAULT_OPTIONS, ELResult, SolverOptions, Status, el_log_ratio
from openbook_el.core.geometry import (BookPoint, Sample, ShapeMismatchError, fold_sample,
                                       folded_normal_matrix, folded_normal_means)
from openbook_el.util.logger import logger


class SpineCase(Enum):
    UNCONSTRAINED = 'unconstrained'
    MAX_OVER_PAGES = 'max-over-pages'
    INFEASIBLE = 'infeasible'


@dataclass(frozen=True)
class SpineELBreakdown:
    """
    Intermediate quantities of a spine evaluation.

    ``violation_checks`` and ``per_page_log_ratios`` are indexed by page - 1.
    ``violation_checks`` is empty when the tangential constraint is infeasible
    and ``per_page_log_ratios`` is empty unless the per-page problems were solved.
    ``chosen_case`` is INFEASIBLE when the tangential constraint alone has no
    interior solution.
    """
    unconstrained_log_ratio: float
    violation_checks: Tuple[float, ...]
    per_page_log_ratios: Tuple[float, ...]
    chosen_case: SpineCase

    @property
    def log_ratio(self) -> float:
        if self.chosen_case is SpineCase.UNCONSTRAINED:
            return self.unconstrained_log_ratio
        if self.chosen_case is SpineCase.MAX_OVER_PAGES:
            return max(self.per_page_log_ratios)
        return -math.inf

    def to_dict(self) -> dict:
        return {
            'unconstrained_log_ratio': self.unconstrained_log_ratio,
            'violation_checks': list(self.violation_checks),
            'per_page_log_ratios': list(self.per_page_log_ratios),
            'chosen_case': self.chosen_case.value,
        }


def el_book(sample: Sample, x: BookPoint, opts: SolverOptions = DEFAULT_OPTIONS,
            check_tol: float = 0.0) -> ELResult:
    """
    EL log-ratio of the Fréchet mean at x.

    :param sample: Sample on the book
    :param x: Hypothesized mean; must live on sample.shape
    :param opts: Solver options
    :param check_tol: Spine inequality checks count as satisfied below -check_tol
    """
    x.check(sample.shape)
    if x.is_spine:
        result, _ = el_spine(sample, x.tangential, opts, check_tol)
        return result
    target = np.concatenate(([x.normal], x.tangential))
    return el_log_ratio(fold_sample(sample, x.page), target, opts)


def el_spine(sample: Sample, x1: Sequence[float], opts: SolverOptions = DEFAULT_OPTIONS,
             check_tol: float = 0.0) -> Tuple[ELResult, SpineELBreakdown]:
    """
    EL log-ratio at the spine point with tangential coordinates x1.

    :return: (result, breakdown)
    """
    shape = sample.shape
    x1 = np.asarray(x1, dtype=float).reshape(-1)
    if x1.size != shape.spine_dim:
        raise ShapeMismatchError(f"Spine target has {x1.size} coordinates, shape expects {shape.spine_dim}")

    if shape.spine_dim == 0:
        unconstrained = ELResult(0.0, np.full(sample.n, 1.0 / sample.n), np.zeros(0), Status.INTERIOR, 0)
    else:
        unconstrained = el_log_ratio(sample.tangentials, x1, opts)
    if not unconstrained.status.solved:
        logger.solver("Spine target is not interior to the projected sample")
        breakdown = SpineELBreakdown(-math.inf, (), (), SpineCase.INFEASIBLE)
        return unconstrained, breakdown

    checks = unconstrained.weights @ folded_normal_matrix(sample)
    check_values = tuple(float(c) for c in checks)
    if np.all(checks < -check_tol):
        breakdown = SpineELBreakdown(unconstrained.log_ratio, check_values, (), SpineCase.UNCONSTRAINED)
        return unconstrained, breakdown

    target = np.concatenate(([0.0], x1))
    per_page = [el_log_ratio(fold_sample(sample, k), target, opts) for k in range(1, shape.pages + 1)]
    values = tuple(float(r.log_ratio) for r in per_page)
    breakdown = SpineELBreakdown(unconstrained.log_ratio, check_values, values, SpineCase.MAX_OVER_PAGES)
    best = int(np.argmax(values))
    logger.solver(f"Spine checks {check_values} violated; best per-page problem is page {best + 1}")
    if values[best] == -math.inf:
        return ELResult(-math.inf, None, np.zeros(shape.dim), Status.INFEASIBLE, 0), breakdown
    return per_page[best], breakdown


def el_spider(sample: Sample, x: BookPoint, opts: SolverOptions = DEFAULT_OPTIONS) -> ELResult:
    """
    Direct two-case EL computation on a spider (dim = 1).

    Off the spine the folded one-dimensional problem is solved. On the spine,
    uniform weights are optimal when every folded mean is negative; otherwise
    the first leg with a nonnegative folded mean gives the binding equality.
    """
    if not sample.shape.is_spider:
        raise ShapeMismatchError(f"el_spider needs dim = 1, got dim = {sample.shape.dim}")
    x.check(sample.shape)
    if not x.is_spine:
        return el_log_ratio(fold_sample(sample, x.page)[:, 0], x.normal, opts)

    means = folded_normal_means(sample)
    binding = [k + 1 for k, m in enumerate(means) if m >= 0]
    if not binding:
        return ELResult(0.0, np.full(sample.n, 1.0 / sample.n), np.zeros(1), Status.INTERIOR, 0)
    return el_log_ratio(fold_sample(sample, binding[0])[:, 0], 0.0, opts)


def log_ratio_profile(sample: Sample, page: int, normals: Sequence[float],
                      tangential: Sequence[float] = (),
                      opts: SolverOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """
    log R along the normal direction of one page.

    :param sample: Sample on the book
    :param page: 1-based page index
    :param normals: Positive normal coordinates to evaluate
    :param tangential: Fixed tangential coordinates of the profile
    :return: Array of log-ratios, one per normal coordinate
    """
    folded = fold_sample(sample, page)
    tangential = np.asarray(tangential, dtype=float).reshape(-1)
    if tangential.size != sample.shape.spine_dim:
        raise ShapeMismatchError(
            f"Profile has {tangential.size} tangential coordinates, shape expects {sample.shape.spine_dim}")
    values = []
    for normal in np.asarray(normals, dtype=float).reshape(-1):
        if normal <= 0:
            raise ShapeMismatchError(f"Profile points must be off the spine, got normal {normal}")
        values.append(el_log_ratio(folded, np.concatenate(([normal], tangential)), opts).log_ratio)
    return np.asarray(values, dtype=float)


def spine_value(sample: Sample, tangential: Optional[Sequence[float]] = None,
                opts: SolverOptions = DEFAULT_OPTIONS) -> float:
    """log R at the spine point (default: the spine projection of the sample mean)"""
    if tangential is None:
        tangential = sample.tangentials.mean(axis=0)
    result, _ = el_spine(sample, tangential, opts)
    return float(result.log_ratio)
