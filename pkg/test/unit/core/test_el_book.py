"""
Tests for empirical likelihood on open books and spiders
"""
import functools
import itertools
import unittest
import sys
import os
import math

import numpy as np
from scipy import optimize

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..', '..'))

from openbook_el.core.el_book import SpineCase, el_book, el_spider, el_spine, log_ratio_profile, spine_value
from openbook_el.core.el_core import Status, el_log_ratio
from openbook_el.core.geometry import (
    BookPoint, BookShape, Sample, ShapeMismatchError, fold_sample, folded_normal_matrix, sample_frechet_mean,
)

LOG_8_9 = math.log(8 / 9)


def _spine_oracle(sample, x1):
    """Primal spine problem with its inequality constraints, solved by SLSQP"""
    n = sample.n
    checks = folded_normal_matrix(sample)
    constraints = [{'type': 'eq', 'fun': lambda p: np.sum(p) - 1.0},
                   {'type': 'eq', 'fun': lambda p: (sample.tangentials - x1).T @ p},
                   {'type': 'ineq', 'fun': lambda p: -(checks.T @ p)}]
    result = optimize.minimize(lambda p: -np.sum(np.log(n * p)), np.full(n, 1.0 / n), method='SLSQP',
                               bounds=[(1e-12, 1.0)] * n, constraints=constraints,
                               options={'ftol': 1e-14, 'maxiter': 1000})
    return -result.fun if result.success else None


class TestElBook(unittest.TestCase):

    def setUp(self):
        self.sample = Sample.spider([1, 2], [2.0, 1.0])

    def test_at_sample_mean(self):
        """Test the log-ratio vanishes at the folded sample mean"""
        self.assertEqual(el_book(self.sample, BookPoint.on_page(1, 0.5)).log_ratio, 0.0)

    def test_off_mean_closed_form(self):
        """Test (1.0, leg1): folded data {2, -1}, weights (2/3, 1/3)"""
        result = el_book(self.sample, BookPoint.on_page(1, 1.0))
        np.testing.assert_allclose(result.weights, [2 / 3, 1 / 3], atol=1e-10)
        self.assertAlmostEqual(result.log_ratio, LOG_8_9, places=10)
        self.assertAlmostEqual(result.statistic, 0.235566, places=6)

    def test_infeasible_leg(self):
        """Test (0.1, leg3): folded data {-2, -1} cannot average to 0.1"""
        result = el_book(self.sample, BookPoint.on_page(3, 0.1))
        self.assertEqual(result.status, Status.INFEASIBLE)
        self.assertEqual(result.log_ratio, -math.inf)

    def test_page_point_on_two_dimensional_book(self):
        """Test an off-spine point is the Euclidean problem on folded data"""
        shape = BookShape(pages=3, dim=2)
        rng = np.random.default_rng(4)
        sample = Sample(shape, rng.integers(1, 4, 15), rng.exponential(size=15), rng.normal(size=(15, 1)))
        x = BookPoint.on_page(2, 0.3, (0.1,))
        expected = el_log_ratio(fold_sample(sample, 2), [0.3, 0.1])
        self.assertEqual(el_book(sample, x).log_ratio, expected.log_ratio)

    def test_shape_mismatch(self):
        """Test points that do not live on the sample's book"""
        with self.assertRaises(ShapeMismatchError):
            el_book(self.sample, BookPoint.on_page(4, 1.0))
        with self.assertRaises(ShapeMismatchError):
            el_book(self.sample, BookPoint.spine((1.0,)))


class TestElSpine(unittest.TestCase):

    def test_sticky_spider(self):
        """Test one point per leg: uniform weights satisfy every check"""
        sample = Sample.spider([1, 2, 3], [1.0, 1.0, 1.0])
        result, breakdown = el_spine(sample, [])
        self.assertEqual(result.log_ratio, 0.0)
        self.assertEqual(breakdown.chosen_case, SpineCase.UNCONSTRAINED)
        np.testing.assert_allclose(breakdown.violation_checks, [-1 / 3] * 3)
        self.assertEqual(breakdown.per_page_log_ratios, ())

    def test_violated_check(self):
        """Test {(2, leg1), (1, leg2)}: the leg-1 check is violated and the leg-1 problem wins"""
        sample = Sample.spider([1, 2], [2.0, 1.0])
        result, breakdown = el_spine(sample, [])
        self.assertEqual(breakdown.chosen_case, SpineCase.MAX_OVER_PAGES)
        np.testing.assert_allclose(breakdown.violation_checks, [0.5, -0.5, -1.5])
        self.assertAlmostEqual(result.log_ratio, LOG_8_9, places=10)
        self.assertAlmostEqual(breakdown.log_ratio, LOG_8_9, places=10)
        self.assertEqual(breakdown.per_page_log_ratios[2], -math.inf)

    def test_unconstrained_on_two_dimensional_book(self):
        """Test all checks negative reduces to EL on the projected sample"""
        shape = BookShape(pages=3, dim=2)
        sample = Sample(shape, [1, 2, 3, 1, 2], [1.0] * 5, [[0.0], [1.0], [-1.0], [0.5], [-0.3]])
        result, breakdown = el_spine(sample, [0.1])
        self.assertEqual(breakdown.chosen_case, SpineCase.UNCONSTRAINED)
        self.assertTrue(all(c < 0 for c in breakdown.violation_checks))
        self.assertEqual(result.log_ratio, el_log_ratio(sample.tangentials, [0.1]).log_ratio)

    def test_matches_constrained_oracle(self):
        """Test the case split against a direct solve of the inequality-constrained problem"""
        shape = BookShape(pages=3, dim=2)
        rng = np.random.default_rng(8)
        compared = 0
        for _ in range(12):
            n = 8
            pages = rng.integers(1, 4, n)
            pages[:3] = 1
            sample = Sample(shape, pages, rng.exponential(size=n), rng.normal(size=(n, 1)))
            x1 = [float(np.mean(sample.tangentials)) + 0.1]
            result, _ = el_spine(sample, x1)
            if not math.isfinite(result.log_ratio):
                continue
            oracle = _spine_oracle(sample, np.asarray(x1))
            if oracle is None:
                continue
            self.assertAlmostEqual(result.log_ratio, oracle, places=4)
            compared += 1
        self.assertGreater(compared, 0)

    def test_simplex_grid_oracle(self):
        """Test the spider spine value against a grid over the 2-simplex"""
        sample = Sample.spider([1, 2, 3], [2.0, 1.0, 0.5])
        step = 1.0 / 900
        a, b = np.meshgrid(np.arange(1, 900) * step, np.arange(1, 900) * step, indexing='ij')
        mask = a + b < 1.0 - step / 2
        p = np.column_stack((a[mask], b[mask], 1.0 - a[mask] - b[mask]))
        feasible = np.all(p @ folded_normal_matrix(sample) <= 0, axis=1)
        best = float(np.max(np.sum(np.log(3 * p[feasible]), axis=1)))

        value = el_book(sample, BookPoint.spine()).log_ratio
        self.assertGreaterEqual(value, best - 1e-9)
        self.assertAlmostEqual(value, best, delta=5e-3)

    def test_infeasible_projection(self):
        """Test a spine target outside the projected hull"""
        shape = BookShape(pages=3, dim=2)
        sample = Sample(shape, [1, 2, 3], [1.0, 1.0, 1.0], [[0.0], [1.0], [2.0]])
        result, breakdown = el_spine(sample, [5.0])
        self.assertEqual(result.log_ratio, -math.inf)
        self.assertEqual(breakdown.chosen_case, SpineCase.INFEASIBLE)
        self.assertEqual(breakdown.violation_checks, ())
        self.assertEqual(breakdown.to_dict()['violation_checks'], [])

    def test_wrong_spine_dimension(self):
        """Test the spine target length is checked"""
        with self.assertRaises(ShapeMismatchError):
            el_spine(Sample.spider([1], [1.0]), [0.0])

    def test_breakdown_dict(self):
        """Test the breakdown report"""
        _, breakdown = el_spine(Sample.spider([1, 2], [2.0, 1.0]), [])
        data = breakdown.to_dict()
        self.assertEqual(data['chosen_case'], 'max-over-pages')
        self.assertEqual(len(data['per_page_log_ratios']), 3)


class TestElSpider(unittest.TestCase):

    def test_examples(self):
        """Test the direct spider procedure on the reference samples"""
        sticky = Sample.spider([1, 2, 3], [1.0, 1.0, 1.0])
        self.assertEqual(el_spider(sticky, BookPoint.spine()).log_ratio, 0.0)
        sample = Sample.spider([1, 2], [2.0, 1.0])
        self.assertAlmostEqual(el_spider(sample, BookPoint.spine()).log_ratio, LOG_8_9, places=10)

    def test_zero_at_sample_mean(self):
        """Test the log-ratio vanishes at the sample Fréchet mean"""
        rng = np.random.default_rng(12)
        for _ in range(20):
            n = int(rng.integers(2, 15))
            sample = Sample.spider(rng.integers(1, 4, n), rng.exponential(size=n))
            mean = sample_frechet_mean(sample).mean
            self.assertAlmostEqual(el_spider(sample, mean).log_ratio, 0.0, places=10)

    def test_agrees_with_el_book(self):
        """Test the two-case spider procedure agrees with the general spine solver"""
        rng = np.random.default_rng(21)
        for _ in range(60):
            n = int(rng.integers(2, 21))
            sample = Sample.spider(rng.integers(1, 4, n), rng.exponential(size=n))
            points = [BookPoint.spine()] + [BookPoint.on_page(int(rng.integers(1, 4)), float(rng.exponential(0.5)))]
            for point in points:
                spider = el_spider(sample, point).log_ratio
                book = el_book(sample, point).log_ratio
                if math.isinf(spider) or math.isinf(book):
                    self.assertEqual(spider, book)
                else:
                    self.assertAlmostEqual(spider, book, delta=1e-10)

    def test_needs_spider(self):
        """Test dim != 1 is rejected"""
        sample = Sample(BookShape(pages=3, dim=2), [1], [1.0], [[0.0]])
        with self.assertRaises(ShapeMismatchError):
            el_spider(sample, BookPoint.spine((0.0,)))


GRID_STEPS = 30


@functools.lru_cache(maxsize=None)
def _simplex_grid(d):
    """First d coordinates of the points of the (d+1)-part simplex grid with step 1/GRID_STEPS, all parts positive"""
    cuts = np.array(list(itertools.combinations(range(1, GRID_STEPS), d)), dtype=float)
    return np.diff(np.hstack((np.zeros((len(cuts), 1)), cuts)), axis=1) / GRID_STEPS


@functools.lru_cache(maxsize=None)
def _window(d):
    return np.array(list(itertools.product(range(-4, 5), repeat=d)), dtype=float)


def _grid_max(complete, d, levels=7):
    """
    Largest sum log(n p) over grid weights, refined around the best point.

    ``complete`` maps free coordinates (N, d) to weights (N, n); rows that are
    infeasible hold NaN or nonpositive entries.
    """
    points = _simplex_grid(d)
    step = 1.0 / GRID_STEPS
    best, best_point = -math.inf, None
    for level in range(levels + 1):
        if level:
            step /= 2.0
            points = best_point + _window(d) * step
        p = complete(points)
        ok = np.all(p > 0, axis=1)
        if not np.any(ok):
            break
        values = np.full(len(points), -np.inf)
        values[ok] = np.sum(np.log(p.shape[1] * p[ok]), axis=1)
        i = int(np.argmax(values))
        if values[i] > best:
            best, best_point = float(values[i]), points[i]
    return best


def _equality_grid_max(z):
    """Grid optimum of sum log(n p) subject to sum p = 1 and sum p z = 0, for z of shape (n,) or (n, q)"""
    z = np.asarray(z, dtype=float).reshape(len(z), -1)
    n, q = z.shape
    lifted = np.hstack((np.ones((n, 1)), z))
    basis = list(max(itertools.combinations(range(n), q + 1),
                     key=lambda rows: abs(np.linalg.det(lifted[list(rows)]))))
    free = [i for i in range(n) if i not in basis]
    target = np.eye(q + 1)[0]

    def complete(u):
        p = np.empty((len(u), n))
        p[:, free] = u
        p[:, basis] = np.linalg.solve(lifted[basis].T, (target - u @ lifted[free]).T).T
        return p

    return _grid_max(complete, n - q - 1)


def _spine_grid_max(sample):
    """Grid optimum of sum log(n p) subject to every page inequality sum p <F_j(x), e_j> <= 0"""
    checks = folded_normal_matrix(sample)

    def complete(u):
        p = np.hstack((u, 1.0 - u.sum(axis=1, keepdims=True)))
        p[np.any(p @ checks > 0, axis=1)] = np.nan
        return p

    return _grid_max(complete, sample.n - 1)


def _grid_sample(rng, index):
    """Balanced spiders (every folded mean negative) on even indices, a dominant leg on odd ones"""
    if index % 2 == 0:
        n = int(rng.choice([3, 6]))
        legs = rng.permutation(np.resize([1, 2, 3], n))
        return Sample.spider(legs, rng.uniform(0.8, 1.2, n))
    n = int(rng.integers(3, 7))
    dominant = int(rng.integers(1, 4))
    n_dominant = n - 1 if n <= 4 else n - 2
    others = [leg for leg in (1, 2, 3) if leg != dominant]
    legs = [dominant] * n_dominant + [int(rng.choice(others)) for _ in range(n - n_dominant)]
    lengths = list(rng.uniform(0.5, 2.0, n_dominant)) + list(rng.uniform(0.1, 0.4, n - n_dominant))
    order = rng.permutation(n)
    return Sample.spider(np.asarray(legs)[order], np.asarray(lengths)[order])


class TestGridOracle(unittest.TestCase):

    def test_random_spiders(self):
        """Test off-spine and spine values on 200 small spiders against a simplex grid search"""
        rng = np.random.default_rng(2024)
        cases = {SpineCase.UNCONSTRAINED: 0, SpineCase.MAX_OVER_PAGES: 0}
        close = 0
        for index in range(200):
            sample = _grid_sample(rng, index)

            leg = int(rng.choice(sample.pages[sample.pages > 0]))
            folded = fold_sample(sample, leg)[:, 0]
            lo = max(float(folded.min()), 0.0)
            x = lo + (float(folded.max()) - lo) * rng.uniform(0.1, 0.9)
            point = BookPoint.on_page(leg, x)
            result = el_book(sample, point)
            self.assertEqual(result.status, Status.INTERIOR, f"sample {index}")
            self.assertAlmostEqual(el_spider(sample, point).log_ratio, result.log_ratio, places=10)
            self.assertAlmostEqual(el_log_ratio(folded, [x]).log_ratio, result.log_ratio, places=12)
            best = _equality_grid_max(folded - x)
            self.assertGreaterEqual(result.log_ratio, best - 1e-9, f"sample {index} at {point}")
            if np.min(result.weights) >= 0.05:
                self.assertLessEqual(result.log_ratio, best + 2e-2, f"sample {index} at {point}")
                close += 1

            spine, breakdown = el_spine(sample, [])
            cases[breakdown.chosen_case] += 1
            self.assertAlmostEqual(el_spider(sample, BookPoint.spine()).log_ratio, spine.log_ratio, places=10)
            best = _spine_grid_max(sample)
            self.assertGreaterEqual(spine.log_ratio, best - 1e-9, f"sample {index} on the spine")
            if breakdown.chosen_case is SpineCase.UNCONSTRAINED:
                self.assertEqual(spine.log_ratio, 0.0)
            elif np.min(spine.weights) >= 0.05:
                self.assertLessEqual(spine.log_ratio, best + 2e-2, f"sample {index} on the spine")
                close += 1

        self.assertGreaterEqual(cases[SpineCase.UNCONSTRAINED], 50)
        self.assertGreaterEqual(cases[SpineCase.MAX_OVER_PAGES], 50)
        self.assertGreater(close, 60)

    def test_random_planar_means(self):
        """Test el_log_ratio on 200 small planar samples against a simplex grid search"""
        rng = np.random.default_rng(7)
        close = 0
        for index in range(200):
            n = int(rng.integers(4, 7))
            data = rng.normal(size=(n, 2))
            target = rng.dirichlet(np.full(n, 3.0)) @ data
            result = el_log_ratio(data, target)
            self.assertEqual(result.status, Status.INTERIOR, f"sample {index}")
            best = _equality_grid_max(data - target)
            self.assertGreaterEqual(result.log_ratio, best - 1e-9, f"sample {index}")
            if np.min(result.weights) >= 0.05:
                self.assertLessEqual(result.log_ratio, best + 2e-2, f"sample {index}")
                close += 1
        self.assertGreater(close, 50)


class TestProfiles(unittest.TestCase):

    def test_profile_matches_el_book(self):
        """Test the page profile evaluates el_book pointwise"""
        sample = Sample.spider([1, 1, 2, 3, 1], [2.0, 1.5, 0.5, 0.2, 3.0])
        normals = [0.5, 1.0, 1.5]
        profile = log_ratio_profile(sample, 1, normals)
        expected = [el_book(sample, BookPoint.on_page(1, v)).log_ratio for v in normals]
        np.testing.assert_array_equal(profile, expected)

    def test_profile_rejects_spine(self):
        """Test profile points must be off the spine"""
        with self.assertRaises(ShapeMismatchError):
            log_ratio_profile(Sample.spider([1, 2], [1.0, 2.0]), 1, [0.0, 1.0])

    def test_spine_value(self):
        """Test the spine value at the projected sample mean"""
        self.assertAlmostEqual(spine_value(Sample.spider([1, 2], [2.0, 1.0])), LOG_8_9, places=10)


if __name__ == '__main__':
    unittest.main()
