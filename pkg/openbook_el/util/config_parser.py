"""
File handlers for the formats openbook_el reads and writes: JSON (shapes,
reports, schemas), YAML (settings, experiment specs) and CSV tables (samples,
confidence-set scans, error table rows).
"""

import json
import math
import yaml
import pandas as pd
from pathlib import Path
from typing import Any, Dict, List, Union


def _json_safe(value: Any) -> Any:
    """Replace non-finite floats by the strings 'inf', '-inf' and 'nan'"""
    if isinstance(value, float) and not math.isfinite(value):
        if math.isnan(value):
            return 'nan'
        return 'inf' if value > 0 else '-inf'
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


class JsonFile:
    """
    A simple JSON file handler with load and save methods.

    Usage:
        JsonFile('/path/to/shape.json').save({'pages': 3, 'dim': 1})
        data = JsonFile('/path/to/shape.json').load()
    """

    def __init__(self, path: Union[str, Path]):
        """
        Initialize JsonFile with a path.

        :param path: Path to the JSON file
        """
        self.path = Path(path)

    def load(self) -> Dict[str, Any]:
        """
        Load and parse the JSON file.

        :return: Parsed JSON content
        :raises FileNotFoundError: If the file doesn't exist
        :raises json.JSONDecodeError: If the file contains invalid JSON
        """
        with open(self.path, 'r') as f:
            return json.load(f)

    def save(self, data: Any, indent: int = 2) -> None:
        """
        Save data to the JSON file. Infinite statistics are written as strings.

        :param data: JSON-serializable data
        :param indent: Indentation level for pretty printing (default: 2)
        """
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, 'w') as f:
            f.write(dumps(data, indent=indent))
            f.write('\n')


def dumps(data: Any, indent: int = 2) -> str:
    """Serialize report data deterministically (sorted keys, no NaN literals)"""
    return json.dumps(_json_safe(data), indent=indent, sort_keys=True)


class YamlFile:
    """
    A simple YAML file handler with load and save methods.

    Usage:
        YamlFile('/path/to/settings.yaml').save({'alpha': 0.05})
        data = YamlFile('/path/to/settings.yaml').load()
    """

    def __init__(self, path: Union[str, Path]):
        """
        Initialize YamlFile with a path.

        :param path: Path to the YAML file
        """
        self.path = Path(path)

    def load(self) -> Dict[str, Any]:
        """
        Load and parse the YAML file.

        :return: Parsed YAML content as a dictionary
        :raises FileNotFoundError: If the file doesn't exist
        :raises yaml.YAMLError: If the file contains invalid YAML
        """
        with open(self.path, 'r') as f:
            return yaml.safe_load(f) or {}

    def save(self, data: Dict[str, Any], default_flow_style: bool = False) -> None:
        """
        Save data to the YAML file.

        :param data: Dictionary to save as YAML
        :param default_flow_style: If True, use flow style (inline) formatting
        """
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, 'w') as f:
            yaml.safe_dump(data, f, default_flow_style=default_flow_style)


class CsvTable:
    """
    CSV handler backed by pandas.

    Usage:
        frame = CsvTable('/path/to/sample.csv').load()
        CsvTable('/path/to/rows.csv').save([{'n': 10, 'rate': 0.15}])
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def load(self) -> pd.DataFrame:
        """
        Load the CSV file into a DataFrame.

        :raises FileNotFoundError: If the file doesn't exist
        :raises pandas.errors.ParserError: If the file is not valid CSV
        """
        return pd.read_csv(self.path, skipinitialspace=True)

    def save(self, rows: Union[pd.DataFrame, List[Dict[str, Any]]],
             columns: List[str] = None) -> None:
        """
        Save rows to the CSV file.

        :param rows: A DataFrame or a list of row dictionaries
        :param columns: Column order (default: order of the first row)
        """
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, 'w', newline='') as f:
            f.write(to_csv(rows, columns))


def to_csv(rows: Union[pd.DataFrame, List[Dict[str, Any]]], columns: List[str] = None) -> str:
    """Render rows as CSV text with a fixed float format"""
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows, columns=columns)
    return frame.to_csv(index=False, float_format='%.10g', lineterminator='\n')
