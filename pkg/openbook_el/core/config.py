"""
Run configuration for the obel command line.

Values are layered: RunConfig defaults, then an optional YAML settings file
(--config), then flags given on the command line.
"""
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Union

import yaml

from openbook_el.core.el_core import SolverOptions
from openbook_el.core.geometry import BookShape, InvalidInputError, Regime
from openbook_el.core.inference import LimitLaw
from openbook_el.core.treeio import LegAssignment
from openbook_el.util.config_parser import JsonFile, YamlFile

OUTPUT_DIR_ENV = 'OBEL_OUTPUT_DIR'

STOCHASTIC_COMMANDS = ('bootstrap', 'simulate')

FORMATS = ('csv', 'json')


def parse_shape(value: Union[str, dict, BookShape, None]) -> BookShape:
    """A shape from a BookShape, a dict, a JSON file path or the inline form 'L,p'"""
    if value is None:
        return BookShape()
    if isinstance(value, BookShape):
        return value
    if isinstance(value, dict):
        return BookShape.from_dict(value)
    text = str(value).strip()
    if text.endswith('.json') or Path(text).is_file():
        return BookShape.from_dict(JsonFile(text).load())
    return BookShape.parse(text)


def parse_regime(value: Optional[str]) -> Union[None, Regime, LimitLaw]:
    """Spine law override: 'sticky', 'half-sticky', 'chisq(q)' or 'halfmix(p)'"""
    if value is None or isinstance(value, (Regime, LimitLaw)):
        return value
    text = str(value).strip().lower()
    if text in ('', 'auto', 'data-driven'):
        return None
    if text == Regime.STICKY.value:
        return Regime.STICKY
    if text in (Regime.HALF_STICKY.value, 'half_sticky', 'halfsticky'):
        return Regime.HALF_STICKY
    return LimitLaw.parse(text)


@dataclass
class RunConfig:
    """Validated settings of one obel invocation"""
    subcommand: str
    inputs: List[str] = field(default_factory=list)
    shape: BookShape = field(default_factory=BookShape)
    alpha: float = 0.05
    B: int = 500
    seed: Optional[int] = None
    grid_points: int = 512
    extent: Optional[float] = None
    format: str = 'json'
    out: Optional[str] = None
    regime: Union[None, Regime, LimitLaw] = None
    workers: int = 1
    solver: SolverOptions = field(default_factory=SolverOptions)
    c: float = 2.0
    leg_order: Optional[List[List[str]]] = None
    verbose: bool = False
    options: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.shape = parse_shape(self.shape)
        self.regime = parse_regime(self.regime)
        if isinstance(self.solver, dict):
            self.solver = SolverOptions.from_dict(self.solver)

    def validate(self) -> 'RunConfig':
        if not (0 < self.alpha < 1):
            raise InvalidInputError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.B < 1:
            raise InvalidInputError(f"B must be at least 1, got {self.B}")
        if self.grid_points < 2:
            raise InvalidInputError(f"grid_points must be at least 2, got {self.grid_points}")
        if self.extent is not None and self.extent <= 0:
            raise InvalidInputError(f"extent must be positive, got {self.extent}")
        if self.workers < 1:
            raise InvalidInputError(f"workers must be at least 1, got {self.workers}")
        if self.format not in FORMATS:
            raise InvalidInputError(f"format must be one of {FORMATS}, got {self.format}")
        if self.c <= 0:
            raise InvalidInputError(f"The stickiness constant c must be positive, got {self.c}")
        if self.needs_seed and self.seed is None:
            raise InvalidInputError(f"'{self.subcommand}' is stochastic and requires --seed")
        if self.leg_order is not None:
            LegAssignment.from_cherries(self.leg_order)
        return self

    @property
    def needs_seed(self) -> bool:
        return self.subcommand in STOCHASTIC_COMMANDS or bool(self.options.get('bootstrap_test'))

    @property
    def leg_assignment(self) -> Optional[LegAssignment]:
        if self.leg_order is None:
            return None
        return LegAssignment.from_cherries(self.leg_order)

    def output_path(self, path: Optional[str] = None) -> Optional[Path]:
        """Resolve an output path; relative paths go under $OBEL_OUTPUT_DIR when it is set"""
        path = path if path is not None else self.out
        if path is None:
            return None
        path = Path(path).expanduser()
        base = os.environ.get(OUTPUT_DIR_ENV)
        if base and not path.is_absolute():
            path = Path(base).expanduser() / path
        return path

    @classmethod
    def build(cls, subcommand: str, kwargs: Dict[str, Any], config_file: Optional[str] = None,
              explicit: Optional[Set[str]] = None) -> 'RunConfig':
        """
        Layer defaults, the YAML settings file and command line values.

        :param kwargs: Parsed command line values; None means "not given"
        :param config_file: Optional YAML settings file
        :param explicit: Names given on the command line; other kwargs are
            parser defaults and do not override the settings file
        """
        known = {f.name for f in fields(cls)} - {'subcommand', 'options'}
        values: Dict[str, Any] = {}
        options: Dict[str, Any] = {}
        if config_file:
            try:
                settings = YamlFile(os.path.expanduser(config_file)).load()
            except yaml.YAMLError as e:
                raise InvalidInputError(f"Settings file {config_file} is not valid YAML: {e}")
            if not isinstance(settings, dict):
                raise InvalidInputError(f"Settings file {config_file} must hold a mapping")
            for key, value in settings.items():
                if key in known:
                    values[key] = value
                else:
                    options[key] = value
        for key, value in kwargs.items():
            if value is None or key == 'config':
                continue
            if explicit is not None and key not in explicit and (key in values or key in options):
                continue
            if key in known:
                values[key] = value
            else:
                options[key] = value
        return cls(subcommand=subcommand, options=options, **values).validate()
