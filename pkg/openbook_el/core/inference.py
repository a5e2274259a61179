"""
Limiting laws, Wilks tests, confidence sets on the spider and bootstrap
calibration.

The statistic is always -2 log R_n at the hypothesized mean. Its asymptotic
law depends on where the mean sits: chi-square with p degrees of freedom off
the spine, chi-square with p-1 degrees of freedom in the sticky regime and
the equal mixture of the two in the half-sticky regime. Tests reject when the
statistic exceeds the threshold; confidence sets keep the points where it
does not.
"""
import functools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, special

from openbook_el.core.el_book import el_book
from openbook_el.core.el_core import DEFAULT_OPTIONS, SolverOptions, el_log_ratio
from openbook_el.core.geometry import (BookPoint, BookShape, DegenerateSampleError, InvalidInputError, Regime,
                                       Sample, ShapeMismatchError, fold_sample, folded_normal_matrix,
                                       sample_frechet_mean)
from openbook_el.util.logger import logger
from openbook_el.util.replicates import order_statistic, run_replicates, substream

HALFMIX_WARNING = ("half-sticky null: the mixture calibration presumes the regime is known, and "
                   "bootstrap coverage error is only O(1/n) in this regime")


def _check_alpha(alpha: float):
    if not (0.0 < alpha < 1.0):
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")


def chi2_tail(q: int, x: float) -> float:
    """Upper tail P(chi2_q > x) via the regularized upper incomplete gamma function"""
    if int(q) != q or q < 1:
        raise InvalidInputError(f"Degrees of freedom must be a positive integer, got {q}")
    if not x >= 0:
        raise InvalidInputError(f"chi2_tail needs x >= 0, got {x}")
    if x == math.inf:
        return 0.0
    return float(special.gammaincc(q / 2.0, x / 2.0))


def _chi2_density(q: int, x: float) -> float:
    if x <= 0:
        return 0.0
    return math.exp((q / 2.0 - 1.0) * math.log(x) - x / 2.0 - (q / 2.0) * math.log(2.0) - special.gammaln(q / 2.0))


class LawKind(Enum):
    CHISQ = 'chisq'
    HALFMIX = 'halfmix'


@dataclass(frozen=True)
class LimitLaw:
    """
    ChiSq(q), or HalfMix(p) = 1/2 chi2_p + 1/2 chi2_(p-1).

    chi2_0 is the point mass at 0, so ChiSq(0) is degenerate and HalfMix(1)
    has an atom of mass 1/2 at 0.
    """
    kind: LawKind
    df: int

    def __post_init__(self):
        minimum = 1 if self.kind is LawKind.HALFMIX else 0
        if int(self.df) != self.df or self.df < minimum:
            raise InvalidInputError(f"Invalid degrees of freedom {self.df} for {self.kind.value}")

    @classmethod
    def chisq(cls, df: int) -> 'LimitLaw':
        return cls(LawKind.CHISQ, df)

    @classmethod
    def halfmix(cls, p: int) -> 'LimitLaw':
        return cls(LawKind.HALFMIX, p)

    @classmethod
    def parse(cls, text: str) -> 'LimitLaw':
        """Parse 'chisq(1)' or 'halfmix(2)'"""
        text = str(text).strip().lower().replace(' ', '')
        for kind in LawKind:
            prefix = kind.value + '('
            if text.startswith(prefix) and text.endswith(')'):
                try:
                    return cls(kind, int(text[len(prefix):-1]))
                except ValueError:
                    break
        raise InvalidInputError(f"Cannot parse limit law '{text}' (expected chisq(q) or halfmix(p))")

    @property
    def label(self) -> str:
        return f"{self.kind.value}({self.df})"

    @property
    def components(self) -> Tuple[int, ...]:
        if self.kind is LawKind.CHISQ:
            return (self.df,)
        return (self.df, self.df - 1)

    @property
    def has_atom(self) -> bool:
        return 0 in self.components

    def _component_tail(self, q: int, x: float) -> float:
        if x < 0:
            return 1.0
        if q == 0:
            return 0.0
        return chi2_tail(q, x)

    def tail(self, x: float) -> float:
        """Right-continuous tail P(X > x)"""
        parts = self.components
        return sum(self._component_tail(q, x) for q in parts) / len(parts)

    def tail_inclusive(self, x: float) -> float:
        """P(X >= x); differs from tail only at the atom"""
        if x <= 0:
            return 1.0
        return self.tail(x)

    def cdf(self, x: float) -> float:
        return 1.0 - self.tail(x)

    def density(self, x: float) -> float:
        parts = self.components
        return sum(_chi2_density(q, x) for q in parts if q > 0) / len(parts)

    def quantile(self, alpha: float) -> float:
        """Smallest c >= 0 with tail(c) <= alpha"""
        _check_alpha(alpha)
        if self.tail(0.0) <= alpha:
            return 0.0
        hi = float(max(1, self.df))
        while self.tail(hi) > alpha:
            hi *= 2.0
        c = optimize.brentq(lambda t: self.tail(t) - alpha, 0.0, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
        for _ in range(3):
            slope = self.density(c)
            if slope <= 0:
                break
            step = (self.tail(c) - alpha) / slope
            if abs(step) < 1e-15 * max(1.0, c):
                break
            c = max(0.0, c + step)
        return float(c)


def law_for_regime(regime: Regime, shape: BookShape, on_spine: bool = True) -> LimitLaw:
    """Asymptotic law of the statistic at the true mean for a given regime"""
    if not on_spine or regime is Regime.NON_STICKY:
        return LimitLaw.chisq(shape.dim)
    if regime is Regime.STICKY:
        return LimitLaw.chisq(shape.dim - 1)
    return LimitLaw.halfmix(shape.dim)


def select_spine_law(sample: Sample, c: float = 2.0) -> Tuple[LimitLaw, Regime]:
    """
    Data-driven law for a spine null.

    The sticky law is chosen when every folded normal mean is more than
    c standard errors below 0; otherwise the heavier half-sticky mixture.
    """
    matrix = folded_normal_matrix(sample)
    means = matrix.mean(axis=0)
    if sample.n > 1:
        spread = matrix.std(axis=0, ddof=1)
    else:
        spread = np.zeros(sample.shape.pages)
    if np.all(means < -c * spread / math.sqrt(sample.n)):
        return LimitLaw.chisq(sample.shape.dim - 1), Regime.STICKY
    return LimitLaw.halfmix(sample.shape.dim), Regime.HALF_STICKY


class RegimeSource(Enum):
    USER_SPECIFIED = 'user-specified'
    DATA_DRIVEN = 'data-driven'


@dataclass(frozen=True)
class TestReport:
    """Outcome of a hypothesis test on the Fréchet mean"""
    __test__ = False

    statistic: float
    law: Optional[LimitLaw]
    threshold: float
    p_value: float
    reject: bool
    regime_source: RegimeSource
    alpha: float
    point: str
    calibration: str = 'asymptotic'
    warning: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            'point': self.point,
            'statistic': float(self.statistic),
            'law': None if self.law is None else self.law.label,
            'threshold': float(self.threshold),
            'p_value': float(self.p_value),
            'reject': bool(self.reject),
            'regime_source': self.regime_source.value,
            'alpha': float(self.alpha),
            'calibration': self.calibration,
            'warning': self.warning,
        }


LawOverride = Union[None, Regime, LimitLaw]


def resolve_law(sample: Sample, z: BookPoint, regime: LawOverride, c: float) -> Tuple[LimitLaw, RegimeSource]:
    if not z.is_spine:
        return LimitLaw.chisq(sample.shape.dim), RegimeSource.DATA_DRIVEN
    if isinstance(regime, LimitLaw):
        return regime, RegimeSource.USER_SPECIFIED
    if isinstance(regime, Regime):
        if regime is Regime.NON_STICKY:
            raise InvalidInputError("A spine null cannot be non-sticky")
        return law_for_regime(regime, sample.shape), RegimeSource.USER_SPECIFIED
    law, _ = select_spine_law(sample, c)
    return law, RegimeSource.DATA_DRIVEN


def wilks_test(sample: Sample, z: BookPoint, alpha: float, regime: LawOverride = None,
               opts: SolverOptions = DEFAULT_OPTIONS, c: float = 2.0) -> TestReport:
    """
    Asymptotic EL test of H0: the Fréchet mean is z.

    :param regime: Optional override for spine nulls, a Regime or a LimitLaw
    :param c: Standard-error multiple of the data-driven sticky rule
    """
    _check_alpha(alpha)
    z.check(sample.shape)
    law, source = resolve_law(sample, z, regime, c)
    warning = HALFMIX_WARNING if law.kind is LawKind.HALFMIX else None
    if warning:
        logger.warning(f"wilks_test at {z}: {warning}")
    statistic = el_book(sample, z, opts).statistic
    threshold = law.quantile(alpha)
    if statistic == math.inf:
        return TestReport(math.inf, law, threshold, 0.0, True, source, alpha, str(z), warning=warning)
    return TestReport(statistic, law, threshold, law.tail_inclusive(statistic), statistic > threshold,
                      source, alpha, str(z), warning=warning)


def ks_distance(values: Sequence[float], law: LimitLaw) -> float:
    """Kolmogorov-Smirnov distance between the empirical law of values and law"""
    ordered = np.sort(np.asarray(values, dtype=float))
    n = len(ordered)
    if n == 0:
        raise InvalidInputError("ks_distance needs at least one value")
    distance = 0.0
    for x in np.unique(ordered):
        below = np.searchsorted(ordered, x, side='left') / n
        upto = np.searchsorted(ordered, x, side='right') / n
        distance = max(distance, abs(upto - law.cdf(x)), abs(below - (1.0 - law.tail_inclusive(x))))
    return float(distance)


@dataclass(frozen=True)
class ConfidenceSet1D:
    """
    Confidence set for the Fréchet mean on a spider.

    ``segments`` are (leg, (lo, hi)) pairs with 0 <= lo < hi; lo = 0 means
    the segment reaches the spine end of the leg. ``spine_end_statistics``
    and ``crossing_levels`` are indexed by leg - 1; a leg's near-spine part is
    in the set iff alpha <= its crossing level.
    """
    alpha: float
    segments: Tuple[Tuple[int, Tuple[float, float]], ...]
    includes_spine: bool
    topology_case: str
    threshold: float
    spine_threshold: float
    law: LimitLaw
    spine_law: LimitLaw
    spine_statistic: float
    spine_end_statistics: Tuple[float, ...]
    crossing_levels: Tuple[float, ...]
    scan: Tuple[Tuple[int, float, float], ...] = field(default=(), repr=False)

    def contains(self, point: BookPoint) -> bool:
        if point.is_spine:
            return self.includes_spine
        return any(leg == point.page and lo <= point.normal <= hi for leg, (lo, hi) in self.segments)

    @property
    def legs(self) -> List[int]:
        return sorted({leg for leg, _ in self.segments})

    def scan_rows(self) -> List[dict]:
        return [{'leg': leg, 'grid_point': g, 'statistic': s} for leg, g, s in self.scan]

    def to_dict(self) -> dict:
        return {
            'alpha': self.alpha,
            'segments': [{'leg': leg, 'lo': lo, 'hi': hi} for leg, (lo, hi) in self.segments],
            'includes_spine': self.includes_spine,
            'topology_case': self.topology_case,
            'threshold': self.threshold,
            'spine_threshold': self.spine_threshold,
            'law': self.law.label,
            'spine_law': self.spine_law.label,
            'spine_statistic': self.spine_statistic,
            'spine_end_statistics': list(self.spine_end_statistics),
            'crossing_levels': list(self.crossing_levels),
        }


TOPOLOGY_CASES = ('i', 'ii', 'iii', 'iv')


def _bisect_edge(inside, good: float, bad: float, xtol: float) -> float:
    """Boundary between an inside point ``good`` and an outside point ``bad``; returns the inside end"""
    while abs(bad - good) > xtol:
        middle = 0.5 * (good + bad)
        if inside(middle):
            good = middle
        else:
            bad = middle
    return good


def confidence_set_spider(sample: Sample, alpha: float, law: Optional[LimitLaw] = None,
                          spine_law: LawOverride = None, grid_points: int = 512,
                          extent: Optional[float] = None, opts: SolverOptions = DEFAULT_OPTIONS,
                          c: float = 2.0) -> ConfidenceSet1D:
    """
    Sub-level set {x : -2 log R_n(x) <= threshold} on a spider.

    Each leg is scanned over (0, extent] on a regular grid (plus the leg's
    folded mean when positive); the edges of the kept runs are refined by
    bisection. The spine is kept or dropped separately with its own law.

    :param law: Off-spine law (default chi2 with 1 degree of freedom)
    :param spine_law: Spine law or regime override (default: data-driven rule)
    :param grid_points: Grid points per leg
    :param extent: Scan extent (default twice the largest leg length)
    """
    shape = sample.shape
    if not shape.is_spider:
        raise ShapeMismatchError("Confidence sets are built on spiders (dim = 1) only")
    _check_alpha(alpha)
    if grid_points < 2:
        raise InvalidInputError(f"grid_points must be at least 2, got {grid_points}")
    law = law or LimitLaw.chisq(1)
    spine = BookPoint.spine()
    resolved_spine_law, _ = resolve_law(sample, spine, spine_law, c)
    threshold = law.quantile(alpha)
    spine_threshold = resolved_spine_law.quantile(alpha)

    spine_statistic = el_book(sample, spine, opts).statistic
    includes_spine = spine_statistic <= spine_threshold
    if extent is None:
        extent = 2.0 * float(np.max(sample.normals))
    xtol = 1e-9 * max(extent, 1.0)

    segments = []
    scan = []
    end_statistics = []
    for leg in range(1, shape.pages + 1):
        folded = fold_sample(sample, leg)
        end_value = el_log_ratio(folded, [0.0], opts).statistic
        end_statistics.append(end_value)
        if extent <= 0:
            continue

        def statistic(g: float, leg=leg, end_value=end_value) -> float:
            if g <= 0:
                return end_value
            return el_book(sample, BookPoint.on_page(leg, g), opts).statistic

        grid = np.linspace(extent / grid_points, extent, grid_points)
        anchor = float(folded.mean())
        if 0 < anchor < extent:
            grid = np.unique(np.append(grid, anchor))
        values = np.array([statistic(g) for g in grid])
        scan.extend((leg, float(g), float(v)) for g, v in zip(grid, values))
        inside = values <= threshold

        def is_inside(g: float, statistic=statistic) -> bool:
            return statistic(g) <= threshold

        index = 0
        while index < len(grid):
            if not inside[index]:
                index += 1
                continue
            start = index
            while index + 1 < len(grid) and inside[index + 1]:
                index += 1
            stop = index
            if start == 0:
                lo = 0.0 if end_value <= threshold else _bisect_edge(is_inside, grid[0], 0.0, xtol)
            else:
                lo = _bisect_edge(is_inside, grid[start], grid[start - 1], xtol)
            if stop == len(grid) - 1:
                hi = float(grid[stop])
            else:
                hi = _bisect_edge(is_inside, grid[stop], grid[stop + 1], xtol)
            if hi >= lo:
                segments.append((leg, (float(lo), float(hi))))
            index += 1

    if not segments and not includes_spine:
        raise DegenerateSampleError(
            f"Confidence set at alpha={alpha} is empty; the threshold {threshold:.6g} is below every statistic")

    touching = len({leg for leg, (lo, _) in segments if lo == 0.0})
    crossing = tuple(law.tail(v) if v < math.inf else 0.0 for v in end_statistics)
    topology = TOPOLOGY_CASES[min(touching, len(TOPOLOGY_CASES) - 1)]
    logger.debug(f"Confidence set at alpha={alpha}: case ({topology}), {len(segments)} segments, "
                 f"spine {'in' if includes_spine else 'out'}")
    return ConfidenceSet1D(alpha=alpha, segments=tuple(segments), includes_spine=bool(includes_spine),
                           topology_case=topology, threshold=threshold, spine_threshold=spine_threshold,
                           law=law, spine_law=resolved_spine_law, spine_statistic=spine_statistic,
                           spine_end_statistics=tuple(end_statistics), crossing_levels=crossing,
                           scan=tuple(scan))


def bootstrap_rank(B: int, alpha: float) -> int:
    """1-based rank floor(B(1 - alpha)) + 1 of the bootstrap threshold"""
    _check_alpha(alpha)
    return min(int(math.floor(B * (1.0 - alpha) + 1e-9)) + 1, B)


@dataclass(frozen=True)
class BootstrapCalibration:
    """Sorted bootstrap statistics and the order-statistic threshold"""
    B: int
    statistics: Tuple[float, ...]
    threshold: float
    infinite_count: int
    alpha: float
    rank: int
    seed: Optional[int] = None

    @classmethod
    def from_statistics(cls, values: Sequence[float], alpha: float, seed: Optional[int] = None) -> 'BootstrapCalibration':
        ordered = tuple(float(v) for v in np.sort(np.asarray(values, dtype=float)))
        B = len(ordered)
        if B < 1:
            raise InvalidInputError("Bootstrap calibration needs B >= 1")
        infinite = sum(1 for v in ordered if v == math.inf)
        if infinite == B:
            raise DegenerateSampleError("Every bootstrap statistic is infinite; the sample is degenerate")
        rank = bootstrap_rank(B, alpha)
        return cls(B=B, statistics=ordered, threshold=order_statistic(ordered, rank),
                   infinite_count=infinite, alpha=alpha, rank=rank, seed=seed)

    def p_value(self, statistic: float) -> float:
        """Share of bootstrap statistics at least as large as statistic"""
        return sum(1 for u in self.statistics if u >= statistic) / self.B

    def to_dict(self) -> dict:
        return {
            'B': self.B,
            'statistics': list(self.statistics),
            'threshold': self.threshold,
            'infinite_count': self.infinite_count,
            'alpha': self.alpha,
            'rank': self.rank,
            'seed': self.seed,
        }


def _bootstrap_replicate(sample: Sample, center: BookPoint, seed: int, opts: SolverOptions, index: int) -> float:
    rng = substream(seed, 'bootstrap', index + 1)
    resample = sample.take(rng.integers(0, sample.n, size=sample.n))
    return el_book(resample, center, opts).statistic


def bootstrap_statistics(sample: Sample, center: BookPoint, B: int, seed: int,
                         opts: SolverOptions = DEFAULT_OPTIONS, workers: int = 1) -> List[float]:
    """-2 log R at center for B resamples; resample b draws from substream ('bootstrap', b)"""
    if int(B) != B or B < 1:
        raise InvalidInputError(f"B must be a positive integer, got {B}")
    replicate = functools.partial(_bootstrap_replicate, sample, center, seed, opts)
    return run_replicates(replicate, int(B), workers, processes=True)


def bootstrap_calibrate(sample: Sample, alpha: float, B: int, seed: int,
                        opts: SolverOptions = DEFAULT_OPTIONS, workers: int = 1) -> BootstrapCalibration:
    """
    Bootstrap threshold for -2 log R at the sample Fréchet mean.

    Infeasible resamples count as +inf.
    """
    _check_alpha(alpha)
    center = sample_frechet_mean(sample).mean
    values = bootstrap_statistics(sample, center, B, seed, opts, workers)
    calibration = BootstrapCalibration.from_statistics(values, alpha, seed)
    logger.debug(f"Bootstrap threshold {calibration.threshold:.6g} at rank {calibration.rank}/{B} "
                 f"({calibration.infinite_count} infinite)")
    return calibration


def bootstrap_test(sample: Sample, z: BookPoint, alpha: float, B: int, seed: int,
                   opts: SolverOptions = DEFAULT_OPTIONS, workers: int = 1) -> TestReport:
    """EL test of H0: the Fréchet mean is z, calibrated by the bootstrap"""
    z.check(sample.shape)
    calibration = bootstrap_calibrate(sample, alpha, B, seed, opts, workers)
    statistic = el_book(sample, z, opts).statistic
    warning = None
    if z.is_spine:
        law, _ = select_spine_law(sample)
        if law.kind is LawKind.HALFMIX:
            warning = HALFMIX_WARNING
    return TestReport(statistic=statistic, law=None, threshold=calibration.threshold,
                      p_value=calibration.p_value(statistic), reject=statistic > calibration.threshold,
                      regime_source=RegimeSource.DATA_DRIVEN, alpha=alpha, point=str(z),
                      calibration='bootstrap', warning=warning)
