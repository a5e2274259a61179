"""
Utility classes for openbook_el.

This module provides:
- Logger: Colored logging on stderr with solver and experiment channels
- ArgParse: Menu/command argument parsing for the obel CLI
- JsonFile, YamlFile, CsvTable: File handlers
- substream, run_replicates: Deterministic replicate streams
"""

from .logger import Logger, Color, logger
from .config_parser import JsonFile, YamlFile, CsvTable
from .replicates import substream, run_replicates

__all__ = [
    'Logger',
    'Color',
    'logger',
    'JsonFile',
    'YamlFile',
    'CsvTable',
    'substream',
    'run_replicates',
]
