"""
Tests for the obel command line
"""
import unittest
import sys
import os
import json
import re
import tempfile
import shutil
from io import StringIO

import jsonschema
import pandas as pd

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..', '..'))

from openbook_el.core.cli import EXIT_DEGENERATE, EXIT_INPUT, EXIT_OK, ObelCLI, run
from openbook_el.core.config import OUTPUT_DIR_ENV
from openbook_el.core.geometry import BookShape, Sample


class CliTestCase(unittest.TestCase):
    """Temporary directory, sample files and captured output"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.old_output_dir = os.environ.pop(OUTPUT_DIR_ENV, None)
        self.two_point = self._sample('two.csv', [1, 2], [2.0, 1.0])
        self.sticky = self._sample('sticky.csv', [1, 2, 3], [1.0, 1.0, 1.0])
        self.spread = self._sample('spread.csv', [1, 1, 1, 1, 2, 2, 2, 3, 3],
                                   [1.0, 1.5, 2.0, 2.5, 0.5, 1.0, 1.2, 0.4, 0.8])

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)
        os.environ.pop(OUTPUT_DIR_ENV, None)
        if self.old_output_dir is not None:
            os.environ[OUTPUT_DIR_ENV] = self.old_output_dir

    def _path(self, name):
        return os.path.join(self.test_dir, name)

    def _sample(self, name, legs, lengths):
        path = self._path(name)
        Sample.spider(legs, lengths).save_csv(path)
        return path

    def _run(self, argv):
        """Run obel and return (exit code, stdout, stderr)"""
        old_stdout, old_stderr = sys.stdout, sys.stderr
        sys.stdout, sys.stderr = StringIO(), StringIO()
        try:
            code = run(argv)
            return code, sys.stdout.getvalue(), sys.stderr.getvalue()
        finally:
            sys.stdout, sys.stderr = old_stdout, old_stderr


class TestElCommand(CliTestCase):

    def test_off_spine_point(self):
        """Test 'leg1 1.0' on {(2, leg1), (1, leg2)}"""
        code, out, _ = self._run(['el', '--sample', self.two_point, '--point', 'leg1 1.0'])
        self.assertEqual(code, EXIT_OK)
        result, = json.loads(out)['results']
        self.assertAlmostEqual(result['statistic'], 0.235566, places=6)
        self.assertEqual(result['point'], 'page1 1.0')

    def test_spine_point(self):
        """Test the spine point has the same statistic and reports its breakdown"""
        code, out, _ = self._run(['el', '-s', self.two_point, '-p', 'spine', '+weights'])
        self.assertEqual(code, EXIT_OK)
        result, = json.loads(out)['results']
        self.assertAlmostEqual(result['statistic'], 0.235566, places=6)
        self.assertEqual(result['breakdown']['chosen_case'], 'max-over-pages')
        self.assertEqual(len(result['weights']), 2)

    def test_infeasible_point(self):
        """Test an infeasible point gives exit 2 and an infinite statistic"""
        code, out, err = self._run(['el', '--sample', self.two_point, '--point', 'leg3 0.1'])
        self.assertEqual(code, EXIT_DEGENERATE)
        self.assertEqual(json.loads(out)['results'][0]['statistic'], 'inf')
        self.assertIn('convex hull', err)

    def test_several_points_as_csv(self):
        """Test repeated points and CSV output"""
        code, out, _ = self._run(['el', '--sample', self.two_point, '-p', 'leg1 0.5', '-p', 'leg1 1.0',
                                  '--format', 'csv'])
        self.assertEqual(code, EXIT_OK)
        frame = pd.read_csv(StringIO(out))
        self.assertEqual(list(frame['log_ratio'][:1]), [0.0])
        self.assertEqual(len(frame), 2)

    def test_out_file_under_output_dir(self):
        """Test relative --out paths resolve under the output directory"""
        os.environ[OUTPUT_DIR_ENV] = self.test_dir
        code, out, _ = self._run(['el', '--sample', self.two_point, '--point', 'leg1 1.0', '--out', 'el.json'])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(out, '')
        with open(self._path('el.json')) as f:
            self.assertIn('results', json.load(f))


class TestOtherCommands(CliTestCase):

    def test_mean(self):
        """Test the sticky sample mean"""
        code, out, _ = self._run(['mean', '--sample', self.sticky])
        self.assertEqual(code, EXIT_OK)
        data = json.loads(out)
        self.assertEqual((data['mean'], data['regime']), ('spine', 'sticky'))

    def test_wilks(self):
        """Test the asymptotic test command"""
        code, out, _ = self._run(['test', '--sample', self.two_point, '--point', 'leg1 1.0'])
        self.assertEqual(code, EXIT_OK)
        data = json.loads(out)
        self.assertAlmostEqual(data['threshold'], 3.841459, places=6)
        self.assertFalse(data['reject'])

    def test_regime_override(self):
        """Test a half-sticky spine override"""
        code, out, _ = self._run(['test', '-s', self.two_point, '-z', 'spine', '--regime', 'half-sticky'])
        self.assertEqual(code, EXIT_OK)
        data = json.loads(out)
        self.assertAlmostEqual(data['threshold'], 2.705543, places=6)
        self.assertEqual(data['regime_source'], 'user-specified')

    def test_bootstrap_test_needs_seed(self):
        """Test +bootstrap without a seed is an input error"""
        code, _, err = self._run(['test', '--sample', self.spread, '--point', 'leg1 0.5', '+bootstrap'])
        self.assertEqual(code, EXIT_INPUT)
        self.assertIn('seed', err)

    def test_bootstrap_test(self):
        """Test the bootstrap calibrated test command"""
        code, out, _ = self._run(['test', '--sample', self.spread, '--point', 'leg1 0.5', '+bootstrap',
                                  '--B', '30', '--seed', '4'])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(json.loads(out)['calibration'], 'bootstrap')

    def test_bootstrap_is_reproducible(self):
        """Test identical seeds give byte-identical output, whatever the worker count"""
        argv = ['bootstrap', '--sample', self.spread, '--B', '40', '--seed', '11']
        first = self._run(argv)
        second = self._run(argv + ['--workers', '3'])
        self.assertEqual(first[0], EXIT_OK)
        self.assertEqual(first[1], second[1])
        self.assertEqual(json.loads(first[1])['rank'], 39)

    def test_confidence_set(self):
        """Test the confidence set report and its scan file"""
        out_path = self._path('cr.json')
        code, _, _ = self._run(['cr', '--sample', self.spread, '--alpha', '0.05', '--grid_points', '32',
                                '--out', out_path])
        self.assertEqual(code, EXIT_OK)
        with open(out_path) as f:
            data = json.load(f)
        self.assertIn(data['topology_case'], ('i', 'ii', 'iii', 'iv'))
        self.assertTrue(any(segment['leg'] == 1 for segment in data['segments']))
        scan = pd.read_csv(self._path('cr_scan.csv'))
        self.assertEqual(list(scan.columns), ['leg', 'grid_point', 'statistic'])

    def test_simulate(self):
        """Test a tiny simulation run"""
        code, out, _ = self._run(['simulate', '--n', '10', '--n', '20', '--runs', '4', '--seed', '1',
                                  '-bootstrap'])
        self.assertEqual(code, EXIT_OK)
        frame = pd.read_csv(StringIO(out))
        self.assertEqual(frame['n'].tolist(), [10, 20])
        self.assertEqual(frame['law'].tolist(), ['chisq(1)', 'chisq(1)'])

    def test_simulate_needs_seed(self):
        """Test simulations refuse to run unseeded"""
        code, _, _ = self._run(['simulate', '--n', '10', '--runs', '2'])
        self.assertEqual(code, EXIT_INPUT)

    def test_settings_file(self):
        """Test values from a YAML settings file"""
        path = self._path('settings.yaml')
        with open(path, 'w') as f:
            f.write("alpha: 0.5\n")
        code, out, _ = self._run(['test', '--sample', self.two_point, '--point', 'leg1 1.0', '--config', path])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(json.loads(out)['alpha'], 0.5)


class TestIngestCommand(CliTestCase):

    def _tree(self, name, text):
        path = self._path(name)
        with open(path, 'w') as f:
            f.write(text)
        return path

    def test_ingest(self):
        """Test ingestion to a sample CSV with a skip report"""
        files = [self._tree('a.nwk', "((Calb:0.1,Scas:0.2):0.08,Sklu:0.3);"),
                 self._tree('b.nwk', "((Scas:0.1,Sklu:0.2):0.2,Calb:0.3);"),
                 self._tree('c.nwk', "")]
        report = self._path('skips.json')
        code, out, _ = self._run(['ingest'] + files + ['--taxa', 'Calb,Scas,Sklu', '--report', report])
        self.assertEqual(code, EXIT_OK)
        frame = pd.read_csv(StringIO(out))
        self.assertEqual(frame['page'].tolist(), [1, 3])
        self.assertEqual(frame['normal'].tolist(), [0.08, 0.2])
        with open(report) as f:
            self.assertEqual(json.load(f)['skipped'][0]['reason'], 'no records')

    def test_no_usable_trees(self):
        """Test a corpus without the taxa exits with status 2"""
        files = [self._tree('a.nwk', "((A:0.1,B:0.2):0.08,C:0.3);")]
        code, _, _ = self._run(['ingest'] + files + ['--taxa', 'Calb', '--taxa', 'Scas', '--taxa', 'Sklu'])
        self.assertEqual(code, EXIT_DEGENERATE)


def _documented_schemas():
    """JSON schemas from the formats document, keyed by their '### name' heading"""
    path = os.path.join(os.path.dirname(__file__), '..', '..', '..', 'docs', 'formats.md')
    with open(path, encoding='utf-8') as f:
        text = f.read()
    return {name.strip(): json.loads(body)
            for name, body in re.findall(r"^### (.+?)\n(?:(?!^#).)*?^```json\n(.*?)^```", text, re.M | re.S)
            if '"type"' in body}


class TestOutputSchemas(CliTestCase):

    @classmethod
    def setUpClass(cls):
        cls.schemas = _documented_schemas()

    def _check(self, schema, argv, expected_code=EXIT_OK):
        code, out, err = self._run(argv + ['--format', 'json'])
        self.assertEqual(code, expected_code, err)
        document = json.loads(out)
        jsonschema.validate(document, self.schemas[schema])
        return document

    def test_every_command_has_a_schema(self):
        """Test the formats document publishes a schema for each JSON output"""
        for name in ('el', 'mean', 'test', 'cr', 'bootstrap', 'simulate', 'ingest', 'skip report'):
            self.assertIn(name, self.schemas)
            jsonschema.Draft7Validator.check_schema(self.schemas[name])

    def test_el(self):
        """Test el output, including spine breakdowns, against its schema"""
        self._check('el', ['el', '-s', self.two_point, '-p', 'leg1 1.0', '-p', 'spine', '+weights'])
        self._check('el', ['el', '-s', self.two_point, '-p', 'leg3 0.1'], EXIT_DEGENERATE)

    def test_el_infeasible_spine_target(self):
        """Test a spine target outside the projected hull reports no violation checks"""
        path = self._path('flat.csv')
        Sample(BookShape(pages=3, dim=2), [1, 2, 3], [1.0, 1.0, 1.0], [[0.0], [1.0], [2.0]]).save_csv(path)
        document = self._check('el', ['el', '--sample', path, '--shape', '3,2', '--point', 'spine 5.0'],
                               EXIT_DEGENERATE)
        result, = document['results']
        self.assertEqual(result['breakdown']['violation_checks'], [])
        self.assertEqual(result['breakdown']['chosen_case'], 'infeasible')

    def test_mean_and_test(self):
        """Test mean and test output against their schemas"""
        self._check('mean', ['mean', '-s', self.sticky])
        self._check('mean', ['mean', '-s', self.spread])
        self._check('test', ['test', '-s', self.two_point, '-z', 'leg1 1.0'])
        self._check('test', ['test', '-s', self.spread, '-z', 'spine'])
        self._check('test', ['test', '-s', self.spread, '-z', 'leg1 0.5', '+bootstrap', '--B', '20',
                             '--seed', '3'])

    def test_cr_and_bootstrap(self):
        """Test confidence set and bootstrap output against their schemas"""
        self._check('cr', ['cr', '-s', self.spread, '--grid_points', '32'])
        self._check('bootstrap', ['bootstrap', '-s', self.spread, '--B', '20', '--seed', '5'])

    def test_simulate(self):
        """Test simulation rows and error table rows against the simulate schema"""
        self._check('simulate', ['simulate', '--n', '10', '--runs', '3', '--seed', '2', '-bootstrap'])
        self._check('simulate', ['simulate', '+error_table', '--n', '10', '--runs', '2', '--seed', '2',
                                 '-bootstrap'])

    def test_ingest(self):
        """Test ingested points and the skip report against their schemas"""
        tree = self._path('a.nwk')
        with open(tree, 'w') as f:
            f.write("((Calb:0.1,Scas:0.2):0.08,Sklu:0.3);(Calb,Scas;")
        report = self._path('skips.json')
        self._check('ingest', ['ingest', tree, '--taxa', 'Calb,Scas,Sklu', '--report', report])
        with open(report) as f:
            jsonschema.validate(json.load(f), self.schemas['skip report'])


class TestErrors(CliTestCase):

    def test_unknown_command(self):
        """Test unknown commands are input errors"""
        self.assertEqual(self._run(['frobnicate'])[0], EXIT_INPUT)

    def test_missing_required(self):
        """Test a missing required argument names the command help"""
        code, _, err = self._run(['el', '--sample', self.two_point])
        self.assertEqual(code, EXIT_INPUT)
        self.assertIn('obel el --help', err)

    def test_missing_file(self):
        """Test a missing sample file"""
        self.assertEqual(self._run(['mean', '--sample', self._path('none.csv')])[0], EXIT_INPUT)

    def test_shape_mismatch(self):
        """Test a spider sample read with a 2-dimensional shape"""
        self.assertEqual(self._run(['mean', '--sample', self.two_point, '--shape', '3,2'])[0], EXIT_INPUT)

    def test_bad_point(self):
        """Test an unparsable point"""
        self.assertEqual(self._run(['el', '--sample', self.two_point, '--point', 'leg9 1.0'])[0], EXIT_INPUT)

    def test_help(self):
        """Test help output exits cleanly"""
        code, out, _ = self._run(['el', '--help'])
        self.assertEqual(code, EXIT_OK)
        self.assertIn('--points', out)

    def test_help_lists_every_flag_with_default(self):
        """Test each command's help names every argument and its default"""
        cli = ObelCLI()
        cli.define_options()
        for name, args in cli.command_args.items():
            code, out, _ = self._run([name, '--help'])
            self.assertEqual(code, EXIT_OK)
            for spec in args:
                flag = spec['name'] if spec.get('pos') else f"--{spec['name']}"
                self.assertIn(flag, out, name)
                self.assertIn(f"default: {spec.get('default')}", out, name)

    def test_every_command_has_a_handler(self):
        """Test each defined command dispatches to a method"""
        cli = ObelCLI()
        cli.define_options()
        for name in cli.commands:
            self.assertTrue(hasattr(cli, name.replace(' ', '_')), name)


if __name__ == '__main__':
    unittest.main()
