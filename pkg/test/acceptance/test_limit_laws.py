"""
Large-sample behaviour of the EL statistic on the 3-spider.

Enabled with OBEL_SLOW_TESTS=1.
"""
import unittest
import sys
import os
from io import StringIO

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from openbook_el.core.cli import EXIT_OK, run
from openbook_el.core.geometry import BookPoint, Regime, sample_frechet_mean
from openbook_el.core.inference import LimitLaw, bootstrap_calibrate, ks_distance
from openbook_el.core.simlab import (SETTINGS, population_frechet_mean, sample_mixture,
                                     statistic_distribution)

SLOW = os.environ.get('OBEL_SLOW_TESTS') == '1'
WORKERS = int(os.environ.get('OBEL_ACCEPTANCE_WORKERS', '1'))


@unittest.skipUnless(SLOW, "set OBEL_SLOW_TESTS=1 to run Monte Carlo acceptance checks")
class TestLimitLaws(unittest.TestCase):

    def test_non_sticky_chi2(self):
        """Test the statistic at the true non-sticky mean is close to chi-square(1)"""
        model = SETTINGS['a']
        truth = population_frechet_mean(model).mean
        values = statistic_distribution(model, truth, n=500, runs=2000, seed=101, workers=WORKERS)
        self.assertLess(ks_distance(values, LimitLaw.chisq(1)), 0.05)

    def test_half_sticky_atom(self):
        """Test about half the statistics vanish when the mean sits on the spine with one zero folded mean"""
        model = SETTINGS['b']
        self.assertEqual(population_frechet_mean(model).regime, Regime.HALF_STICKY)
        values = statistic_distribution(model, BookPoint.spine(), n=2000, runs=2000, seed=102, workers=WORKERS)
        zero_fraction = float(np.mean(values == 0.0))
        self.assertGreaterEqual(zero_fraction, 0.45)
        self.assertLessEqual(zero_fraction, 0.55)

    def test_sticky_degenerate(self):
        """Test the statistic is exactly zero in nearly every sticky replicate"""
        model = SETTINGS['d']
        values = statistic_distribution(model, BookPoint.spine(), n=500, runs=1000, seed=103, workers=WORKERS)
        self.assertGreaterEqual(float(np.mean(values == 0.0)), 0.95)

    def test_consistency_under_alternative(self):
        """Test the median statistic at a wrong point grows with n"""
        model = SETTINGS['a']
        point = BookPoint.on_page(1, 0.5)
        medians = [float(np.median(statistic_distribution(model, point, n=n, runs=200, seed=104 + n,
                                                          workers=WORKERS)))
                   for n in (50, 200, 800)]
        self.assertLess(medians[0], medians[1])
        self.assertLess(medians[1], medians[2])

    def test_population_and_sample_means(self):
        """Test the sample mean of a million draws is close to the population mean"""
        model = SETTINGS['a']
        report = sample_frechet_mean(sample_mixture(model, 1000000, seed=105))
        self.assertEqual(report.mean.page, 1)
        self.assertLess(abs(report.mean.normal - 1 / 6), 0.01)

    def test_bootstrap_threshold(self):
        """Test the bootstrap threshold of a non-sticky sample is near the chi-square quantile"""
        sample = sample_mixture(SETTINGS['a'], 100, seed=106)
        calibration = bootstrap_calibrate(sample, 0.05, 500, seed=107, workers=WORKERS)
        self.assertNotAlmostEqual(calibration.threshold, 3.841459, places=6)
        self.assertGreater(calibration.threshold, 2.0)
        self.assertLess(calibration.threshold, 7.0)


@unittest.skipUnless(SLOW, "set OBEL_SLOW_TESTS=1 to run Monte Carlo acceptance checks")
class TestReproducibility(unittest.TestCase):

    def _stdout(self, argv):
        old_stdout = sys.stdout
        sys.stdout = StringIO()
        try:
            code = run(argv)
            return code, sys.stdout.getvalue()
        finally:
            sys.stdout = old_stdout

    def test_simulate_independent_of_workers(self):
        """Test simulate output is byte-identical for 1 and 4 workers"""
        argv = ['simulate', '--n', '10', '--n', '50', '--runs', '100', '--B', '100', '--seed', '42']
        code_one, serial = self._stdout(argv + ['--workers', '1'])
        code_four, parallel = self._stdout(argv + ['--workers', '4'])
        self.assertEqual((code_one, code_four), (EXIT_OK, EXIT_OK))
        self.assertEqual(serial, parallel)


if __name__ == '__main__':
    unittest.main()
