"""
Tests for the JSON, YAML and CSV file handlers
"""
import unittest
import sys
import os
import json
import math
import tempfile
import shutil

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..', '..'))

from openbook_el.util.config_parser import CsvTable, JsonFile, YamlFile, dumps, to_csv


class TestConfigParser(unittest.TestCase):
    """Tests for file handlers"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_json_round_trip(self):
        """Test JsonFile saves and loads a shape document"""
        path = os.path.join(self.test_dir, 'nested', 'shape.json')
        JsonFile(path).save({'pages': 3, 'dim': 1})

        self.assertEqual(JsonFile(path).load(), {'pages': 3, 'dim': 1})

    def test_json_infinities_are_strings(self):
        """Test non-finite statistics are written as strings"""
        text = dumps({'statistic': math.inf, 'log_ratio': -math.inf, 'bad': math.nan})
        data = json.loads(text)

        self.assertEqual(data['statistic'], 'inf')
        self.assertEqual(data['log_ratio'], '-inf')
        self.assertEqual(data['bad'], 'nan')

    def test_dumps_is_deterministic(self):
        """Test keys are sorted so identical reports give identical bytes"""
        self.assertEqual(dumps({'b': 1, 'a': [1.5, 2]}), dumps({'a': [1.5, 2], 'b': 1}))

    def test_yaml_round_trip(self):
        """Test YamlFile saves and loads settings"""
        path = os.path.join(self.test_dir, 'settings.yaml')
        settings = {'alpha': 0.1, 'solver': {'gtol': 1e-9}, 'leg_order': [['A', 'B'], ['A', 'C'], ['B', 'C']]}
        YamlFile(path).save(settings)

        self.assertEqual(YamlFile(path).load(), settings)

    def test_empty_yaml_is_empty_dict(self):
        """Test an empty settings file loads as an empty mapping"""
        path = os.path.join(self.test_dir, 'empty.yaml')
        open(path, 'w').close()

        self.assertEqual(YamlFile(path).load(), {})

    def test_csv_round_trip(self):
        """Test CsvTable writes rows and reads them back"""
        path = os.path.join(self.test_dir, 'rows.csv')
        CsvTable(path).save([{'n': 10, 'rate': 0.153}, {'n': 20, 'rate': 0.1005}])
        frame = CsvTable(path).load()

        self.assertEqual(list(frame.columns), ['n', 'rate'])
        self.assertEqual(frame['n'].tolist(), [10, 20])
        self.assertAlmostEqual(frame['rate'][1], 0.1005)

    def test_to_csv_column_order(self):
        """Test explicit column order and newline style"""
        text = to_csv([{'b': 2, 'a': 1}], ['a', 'b'])

        self.assertEqual(text, 'a,b\n1,2\n')

    def test_missing_file_raises(self):
        """Test loading a missing file raises FileNotFoundError"""
        with self.assertRaises(FileNotFoundError):
            JsonFile(os.path.join(self.test_dir, 'nope.json')).load()


if __name__ == '__main__':
    unittest.main()
