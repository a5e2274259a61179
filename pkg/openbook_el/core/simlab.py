"""
Exponential mixtures on the spider and the Monte Carlo lab built on them.

A mixture puts weight w_k on leg k and draws the position along the leg from
an exponential law with rate a_k (mean 1/a_k). Population folded means are
computed exactly with fractions, so the location and regime of the
population Fréchet mean are exact.
"""
import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from openbook_el.core.el_book import el_book
from openbook_el.core.el_core import DEFAULT_OPTIONS, SolverOptions
from openbook_el.core.geometry import (BookPoint, BookShape, DegenerateSampleError, InvalidInputError,
                                       MeanReport, Regime, Sample, classify_folded_means, sample_frechet_mean)
from openbook_el.core.inference import (BootstrapCalibration, LimitLaw, bootstrap_statistics, resolve_law,
                                        law_for_regime)
from openbook_el.util.logger import logger
from openbook_el.util.replicates import derive_seed, run_replicates, substream


def _exact(value) -> Fraction:
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True)
class SpiderMixture:
    """Leg weights and exponential rates of a mixture on the spider"""
    weights: Tuple[Fraction, ...]
    rates: Tuple[Fraction, ...]

    def __post_init__(self):
        try:
            weights = tuple(_exact(w) for w in self.weights)
            rates = tuple(_exact(a) for a in self.rates)
        except (TypeError, ValueError, ZeroDivisionError) as e:
            raise InvalidInputError(f"Mixture parameters must be numbers or fractions: {e}")
        if len(weights) != len(rates):
            raise InvalidInputError("weights and rates must have the same length")
        if len(weights) < 3:
            raise InvalidInputError(f"A spider needs at least 3 legs, got {len(weights)}")
        if any(w <= 0 for w in weights) or any(a <= 0 for a in rates):
            raise InvalidInputError("Mixture weights and rates must be positive")
        if abs(float(sum(weights)) - 1.0) > 1e-12:
            raise InvalidInputError(f"Mixture weights sum to {float(sum(weights))}, not 1")
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'rates', rates)

    @property
    def legs(self) -> int:
        return len(self.weights)

    @property
    def shape(self) -> BookShape:
        return BookShape(pages=self.legs, dim=1)

    def folded_means(self) -> Tuple[Fraction, ...]:
        """Exact m_k = w_k / a_k - sum over j != k of w_j / a_j"""
        leg_means = [w / a for w, a in zip(self.weights, self.rates)]
        total = sum(leg_means)
        return tuple(2 * m - total for m in leg_means)

    def to_dict(self) -> dict:
        return {'weights': [str(w) for w in self.weights], 'rates': [str(a) for a in self.rates]}

    @classmethod
    def from_dict(cls, data: dict) -> 'SpiderMixture':
        try:
            return cls(weights=tuple(data['weights']), rates=tuple(data['rates']))
        except KeyError as e:
            raise InvalidInputError(f"Mixture is missing the field {e}")


SETTINGS: Dict[str, SpiderMixture] = {
    'a': SpiderMixture((Fraction(1, 2), Fraction(1, 3), Fraction(1, 6)), (1, 2, 1)),
    'b': SpiderMixture((Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)), (1, 1, 1)),
    # Leg-1 rate chosen so the folded mean on leg 1 is +1/6
    'c': SpiderMixture((Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)), (Fraction(3, 4), 1, 1)),
    'd': SpiderMixture((Fraction(1, 3), Fraction(1, 3), Fraction(1, 3)), (1, 1, 1)),
    'type1': SpiderMixture((Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)), (Fraction(1, 5), 2, 2)),
    'alt_10_4': SpiderMixture((Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)), (Fraction(2, 11), 2, 2)),
    'alt_13_4': SpiderMixture((Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)), (Fraction(2, 14), 2, 2)),
}


def get_setting(name: str) -> SpiderMixture:
    try:
        return SETTINGS[name]
    except KeyError:
        raise InvalidInputError(f"Unknown setting '{name}'; available: {sorted(SETTINGS)}")


def _check_reference_means():
    # Exponential means are 1/rate; both stated population means depend on it
    if SETTINGS['a'].folded_means()[0] != Fraction(1, 6):
        raise RuntimeError("Setting (a) must have its Fréchet mean at 1/6 on leg 1")
    if SETTINGS['type1'].folded_means()[0] != Fraction(9, 4):
        raise RuntimeError("The Type I model must have its Fréchet mean at 9/4 on leg 1")


_check_reference_means()


def population_frechet_mean(model: SpiderMixture) -> MeanReport:
    """Population Fréchet mean, classified exactly from the folded means"""
    means = model.folded_means()
    regime, page = classify_folded_means(means, 0)
    if regime is Regime.NON_STICKY:
        mean = BookPoint.on_page(page, float(means[page - 1]))
    else:
        mean = BookPoint.spine()
    return MeanReport(mean=mean, regime=regime, regime_page=page,
                      folded_normal_means=tuple(float(m) for m in means))


def draw_from_uniforms(model: SpiderMixture, leg_uniforms: Sequence[float],
                       length_uniforms: Sequence[float]) -> Sample:
    """
    Inverse-CDF draw: leg k is chosen when the first uniform falls in the k-th
    cell of the cumulative weights, the length is -log(1 - U) / a_k.
    """
    leg_uniforms = np.asarray(leg_uniforms, dtype=float).reshape(-1)
    length_uniforms = np.asarray(length_uniforms, dtype=float).reshape(-1)
    if leg_uniforms.size != length_uniforms.size:
        raise InvalidInputError("Need one length uniform per leg uniform")
    if np.any((leg_uniforms < 0) | (leg_uniforms >= 1)) or np.any((length_uniforms < 0) | (length_uniforms >= 1)):
        raise InvalidInputError("Uniforms must lie in [0, 1)")
    cumulative = np.cumsum([float(w) for w in model.weights])
    legs = np.minimum(np.searchsorted(cumulative, leg_uniforms, side='right'), model.legs - 1)
    rates = np.array([float(a) for a in model.rates])[legs]
    lengths = -np.log1p(-length_uniforms) / rates
    return Sample(model.shape, legs + 1, lengths)


def sample_mixture(model: SpiderMixture, n: int, seed: Optional[int] = None,
                   rng: Optional[np.random.Generator] = None) -> Sample:
    """
    Draw n points from the mixture.

    :param seed: Master seed (stream 'mixture'); ignored when rng is given
    :param rng: Generator to draw from
    """
    if int(n) != n or n < 1:
        raise InvalidInputError(f"Sample size must be a positive integer, got {n}")
    if rng is None:
        rng = substream(seed, 'mixture')
    leg_uniforms = rng.random(int(n))
    length_uniforms = rng.random(int(n))
    return draw_from_uniforms(model, leg_uniforms, length_uniforms)


@dataclass(frozen=True)
class ExperimentSpec:
    """One Monte Carlo experiment: draw from model, test H0 that the mean is null_point"""
    model: SpiderMixture
    n: int
    runs: int
    null_point: BookPoint
    master_seed: int
    alpha: float = 0.05
    B: int = 500
    bootstrap: bool = True
    keep_statistics: bool = False
    name: str = ''

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInputError(f"n must be a positive integer, got {self.n}")
        if int(self.runs) != self.runs or self.runs < 1:
            raise InvalidInputError(f"runs must be a positive integer, got {self.runs}")
        if int(self.B) != self.B or self.B < 1:
            raise InvalidInputError(f"B must be a positive integer, got {self.B}")
        if not (0 < self.alpha < 1):
            raise InvalidInputError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.master_seed is None:
            raise InvalidInputError("Experiments require a master seed")
        self.null_point.check(self.model.shape)

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'model': self.model.to_dict(),
            'n': self.n,
            'runs': self.runs,
            'alpha': self.alpha,
            'B': self.B,
            'bootstrap': self.bootstrap,
            'null_point': str(self.null_point),
            'master_seed': self.master_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'ExperimentSpec':
        try:
            model = data['model']
            model = get_setting(model) if isinstance(model, str) else SpiderMixture.from_dict(model)
            null = data.get('null_point')
            null_point = (population_frechet_mean(model).mean if null is None
                          else BookPoint.parse(null, model.shape))
            return cls(model=model, n=int(data['n']), runs=int(data['runs']), null_point=null_point,
                       master_seed=int(data['master_seed']), alpha=float(data.get('alpha', 0.05)),
                       B=int(data.get('B', 500)), bootstrap=bool(data.get('bootstrap', True)),
                       keep_statistics=bool(data.get('keep_statistics', False)),
                       name=str(data.get('name', data['model'] if isinstance(data['model'], str) else '')))
        except KeyError as e:
            raise InvalidInputError(f"Experiment spec is missing the field {e}")


def mc_standard_error(rate: float, runs: int) -> float:
    return math.sqrt(rate * (1.0 - rate) / runs)


@dataclass(frozen=True)
class ExperimentReport:
    """Rejection rates of one experiment with binomial standard errors"""
    spec: ExperimentSpec
    law: LimitLaw
    rejection_rate_chi2: float
    rejection_rate_bootstrap: Optional[float]
    se_chi2: float
    se_bootstrap: Optional[float]
    zero_fraction: float
    statistics: Optional[Tuple[float, ...]] = field(default=None, repr=False)

    def to_row(self) -> dict:
        return {
            'name': self.spec.name,
            'n': self.spec.n,
            'runs': self.spec.runs,
            'alpha': self.spec.alpha,
            'null_point': str(self.spec.null_point),
            'law': self.law.label,
            'chi2_rate': self.rejection_rate_chi2,
            'bootstrap_rate': self.rejection_rate_bootstrap,
            'chi2_se': self.se_chi2,
            'bootstrap_se': self.se_bootstrap,
            'zero_fraction': self.zero_fraction,
        }

    def to_dict(self) -> dict:
        data = self.to_row()
        data['spec'] = self.spec.to_dict()
        if self.statistics is not None:
            data['statistics'] = list(self.statistics)
        return data


def _statistic_replicate(model: SpiderMixture, point: BookPoint, n: int, seed: int, opts: SolverOptions,
                         index: int) -> float:
    sample = sample_mixture(model, n, rng=substream(seed, 'experiment', index))
    return el_book(sample, point, opts).statistic


def statistic_distribution(model: SpiderMixture, point: BookPoint, n: int, runs: int, seed: int,
                           opts: SolverOptions = DEFAULT_OPTIONS, workers: int = 1) -> np.ndarray:
    """-2 log R at point over runs samples of size n drawn from model"""
    point.check(model.shape)
    replicate = functools.partial(_statistic_replicate, model, point, n, seed, opts)
    return np.asarray(run_replicates(replicate, runs, workers, processes=True), dtype=float)


def _experiment_law(spec: ExperimentSpec) -> Optional[LimitLaw]:
    """Asymptotic law from the null point and the model's population regime; None means per-sample rule"""
    if not spec.null_point.is_spine:
        return LimitLaw.chisq(1)
    population = population_frechet_mean(spec.model)
    if population.mean.is_spine:
        return law_for_regime(population.regime, spec.model.shape)
    return None


def _experiment_replicate(spec: ExperimentSpec, opts: SolverOptions, law: Optional[LimitLaw],
                          threshold: Optional[float], index: int) -> Tuple[float, bool, Optional[bool], str]:
    sample = sample_mixture(spec.model, spec.n, rng=substream(spec.master_seed, 'experiment', index))
    statistic = el_book(sample, spec.null_point, opts).statistic
    if law is None:
        replicate_law, _ = resolve_law(sample, spec.null_point, None, 2.0)
        replicate_threshold = replicate_law.quantile(spec.alpha)
    else:
        replicate_law, replicate_threshold = law, threshold
    reject_boot = None
    if spec.bootstrap:
        center = sample_frechet_mean(sample).mean
        child = derive_seed(spec.master_seed, 'experiment-bootstrap', index)
        values = bootstrap_statistics(sample, center, spec.B, child, opts)
        try:
            calibration = BootstrapCalibration.from_statistics(values, spec.alpha, child)
            reject_boot = statistic > calibration.threshold
        except DegenerateSampleError:
            logger.debug(f"Replicate {index}: every bootstrap statistic is infinite; not rejecting")
            reject_boot = False
    return statistic, statistic > replicate_threshold, reject_boot, replicate_law.label


def run_error_experiment(spec: ExperimentSpec, opts: SolverOptions = DEFAULT_OPTIONS,
                         workers: int = 1) -> ExperimentReport:
    """
    Monte Carlo rejection rates of the asymptotic and bootstrap calibrated tests.

    Replicate r draws its sample from substream ('experiment', r) of the
    master seed and its bootstrap resamples from a child seed derived from
    ('experiment-bootstrap', r), so results do not depend on workers.
    """
    law = _experiment_law(spec)
    threshold = law.quantile(spec.alpha) if law is not None else None
    logger.experiment(f"Experiment {spec.name or '-'}: n={spec.n}, runs={spec.runs}, null {spec.null_point}, "
                      f"bootstrap {'B=' + str(spec.B) if spec.bootstrap else 'off'}")

    replicate = functools.partial(_experiment_replicate, spec, opts, law, threshold)
    outcomes = run_replicates(replicate, spec.runs, workers, processes=True)
    statistics = tuple(float(o[0]) for o in outcomes)
    rate_chi2 = sum(1 for o in outcomes if o[1]) / spec.runs
    rate_boot = sum(1 for o in outcomes if o[2]) / spec.runs if spec.bootstrap else None
    zero_fraction = sum(1 for s in statistics if s == 0.0) / spec.runs
    report_law = law if law is not None else LimitLaw.parse(outcomes[0][3])
    logger.experiment(f"Experiment {spec.name or '-'} n={spec.n}: chi2 rate {rate_chi2:.4f}"
                      + (f", bootstrap rate {rate_boot:.4f}" if rate_boot is not None else ""))
    return ExperimentReport(
        spec=spec, law=report_law,
        rejection_rate_chi2=rate_chi2, rejection_rate_bootstrap=rate_boot,
        se_chi2=mc_standard_error(rate_chi2, spec.runs),
        se_bootstrap=None if rate_boot is None else mc_standard_error(rate_boot, spec.runs),
        zero_fraction=zero_fraction,
        statistics=statistics if spec.keep_statistics else None)


ERROR_TABLE_COLUMNS = ['error_type', 'null', 'model', 'n', 'chi2_rate', 'bootstrap_rate', 'chi2_se', 'bootstrap_se']

ERROR_TABLE_BLOCKS = (('I', 'type1'), ('II', 'alt_10_4'), ('II', 'alt_13_4'))


def error_table(seed: int, sizes: Sequence[int] = (10, 20, 50, 200), runs: int = 500, B: int = 500,
                alpha: float = 0.05, bootstrap: bool = True, blocks: Sequence[Tuple[str, str]] = ERROR_TABLE_BLOCKS,
                opts: SolverOptions = DEFAULT_OPTIONS, workers: int = 1) -> List[dict]:
    """
    Type I and Type II error table at the 9/4 null on leg 1.

    Type I rows report rejection rates under the null model; Type II rows
    report acceptance rates under an alternative model.
    """
    null_model = SETTINGS['type1']
    null_point = population_frechet_mean(null_model).mean
    rows = []
    for error_type, model_name in blocks:
        for n in sizes:
            spec = ExperimentSpec(model=get_setting(model_name), n=n, runs=runs, null_point=null_point,
                                  master_seed=derive_seed(seed, f"error-table-{model_name}", n), alpha=alpha,
                                  B=B, bootstrap=bootstrap, name=model_name)
            report = run_error_experiment(spec, opts, workers)
            chi2_rate = report.rejection_rate_chi2
            boot_rate = report.rejection_rate_bootstrap
            if error_type == 'II':
                chi2_rate = 1.0 - chi2_rate
                boot_rate = None if boot_rate is None else 1.0 - boot_rate
            rows.append({
                'error_type': error_type,
                'null': '9/4',
                'model': model_name,
                'n': n,
                'chi2_rate': chi2_rate,
                'bootstrap_rate': boot_rate,
                'chi2_se': report.se_chi2,
                'bootstrap_se': report.se_bootstrap,
            })
    return rows
