import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from openbook_el.core.config import RunConfig
from openbook_el.core.el_book import el_book, el_spine
from openbook_el.core.geometry import BookPoint, DegenerateSampleError, Sample, sample_frechet_mean
from openbook_el.core.inference import bootstrap_calibrate, bootstrap_test, confidence_set_spider, wilks_test
from openbook_el.core.simlab import (SETTINGS, ERROR_TABLE_COLUMNS, ExperimentSpec, get_setting,
                                     population_frechet_mean, run_error_experiment, error_table)
from openbook_el.core.treeio import ingest_corpus
from openbook_el.util.argparse import ArgParse, ArgumentError
from openbook_el.util.config_parser import JsonFile, dumps, to_csv
from openbook_el.util.logger import logger

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DEGENERATE = 2
EXIT_INTERNAL = 3


def _arg(name: str, msg: str, arg_type: type = str, default: Any = None, **extra) -> Dict[str, Any]:
    spec = {'name': name, 'msg': msg, 'type': arg_type, 'default': default}
    spec.update(extra)
    return spec


def _sample_args() -> List[Dict[str, Any]]:
    return [
        _arg('sample', 'Sample CSV with columns page, normal, t1..t(p-1); page 0 is the spine',
             required=True, aliases=['s']),
        _arg('shape', "Book shape: a JSON file {pages, dim} or the inline form 'pages,dim'", default='3,1'),
    ]


def _output_args(default_format: str = 'json') -> List[Dict[str, Any]]:
    return [
        _arg('out', 'Output file (relative paths go under $OBEL_OUTPUT_DIR when set; default stdout)',
             aliases=['o']),
        _arg('format', 'Output format', default=default_format, choices=['csv', 'json']),
        _arg('config', 'YAML settings file (solver options, leg_order, defaults)'),
        _arg('verbose', 'Print solver and debug diagnostics on stderr', bool, False),
    ]


class ObelCLI(ArgParse):
    """
    The obel command line: EL evaluation, means, tests, confidence sets,
    bootstrap calibration, simulations and tree ingestion.
    """

    def __init__(self):
        super().__init__()
        self.exit_code = EXIT_OK
        self.config: Optional[RunConfig] = None

    def define_options(self):
        """Define the obel command structure"""
        self.add_cmd('el', msg="Evaluate the EL log-ratio at one or more points")
        self.add_args(_sample_args() + [
            _arg('points', "Evaluation point, e.g. 'leg1 1.0', 'page2 0.5 0.1' or 'spine'; repeatable",
                 list, None, required=True, aliases=['point', 'p']),
            _arg('weights', 'Include the optimal weights in the report', bool, False),
        ] + _output_args())

        self.add_cmd('mean', msg="Sample Fréchet mean and its stickiness regime")
        self.add_args(_sample_args() + _output_args())

        self.add_cmd('test', msg="EL test of H0: the Fréchet mean equals a point")
        self.add_args(_sample_args() + [
            _arg('point', 'Hypothesized mean', required=True, aliases=['z']),
            _arg('alpha', 'Significance level', float, 0.05),
            _arg('regime', "Spine law override: sticky, half-sticky, chisq(q) or halfmix(p)"),
            _arg('bootstrap_test', 'Calibrate with the bootstrap instead of the limit law', bool, False,
                 aliases=['bootstrap']),
            _arg('B', 'Bootstrap resamples', int, 500),
            _arg('seed', 'Master seed (required with +bootstrap)', int),
            _arg('workers', 'Threads for bootstrap replicates', int, 1),
            _arg('c', 'Standard-error multiple of the data-driven sticky rule', float, 2.0),
        ] + _output_args())

        self.add_cmd('cr', msg="Confidence set for the Fréchet mean on a spider")
        self.add_args(_sample_args() + [
            _arg('alpha', 'Significance level', float, 0.05),
            _arg('regime', "Spine law override: sticky, half-sticky, chisq(q) or halfmix(p)"),
            _arg('grid_points', 'Grid points per leg', int, 512),
            _arg('extent', 'Scan extent along each leg (default twice the longest leg length)', float),
            _arg('scan', 'File for the (leg, grid_point, statistic) scan CSV'),
            _arg('c', 'Standard-error multiple of the data-driven sticky rule', float, 2.0),
        ] + _output_args())

        self.add_cmd('bootstrap', msg="Bootstrap threshold for -2 log R at the sample mean")
        self.add_args(_sample_args() + [
            _arg('alpha', 'Significance level', float, 0.05),
            _arg('B', 'Bootstrap resamples', int, 500),
            _arg('seed', 'Master seed (required)', int),
            _arg('workers', 'Threads for bootstrap replicates', int, 1),
        ] + _output_args())

        self.add_cmd('simulate', msg="Monte Carlo Type I / Type II error rates on the 3-spider")
        self.add_args([
            _arg('setting', 'Named mixture', default='type1', choices=sorted(SETTINGS)),
            _arg('spec', 'Experiment spec JSON file (overrides --setting and sizes)'),
            _arg('n', 'Sample sizes; repeatable', list, [10, 20, 50, 200]),
            _arg('runs', 'Monte Carlo replicates per sample size', int, 500),
            _arg('alpha', 'Significance level', float, 0.05),
            _arg('B', 'Bootstrap resamples', int, 500),
            _arg('bootstrap', 'Also run the bootstrap calibrated test', bool, True),
            _arg('null', "Null point (default: the population mean of the type1 model)"),
            _arg('error_table', 'Run the full error table (Type I and both Type II blocks)', bool, False),
            _arg('seed', 'Master seed (required)', int),
            _arg('workers', 'Threads for Monte Carlo replicates', int, 1),
        ] + _output_args('csv'))

        self.add_cmd('ingest', msg="Map Newick trees onto the 3-spider")
        self.add_args([
            _arg('files', 'Newick files; repeatable', list, None, required=True, pos=True, aliases=['f']),
            _arg('taxa', 'The three taxa to restrict trees to; repeatable', list, None, required=True),
            _arg('report', 'File for the JSON skip report (default stderr)'),
            _arg('workers', 'Threads for reading files', int, 1),
        ] + _output_args('csv'))

    def _configure(self) -> RunConfig:
        self.config = RunConfig.build(self.current_command, self.kwargs, self.kwargs.get('config'),
                                      self.explicit)
        logger.set_verbose(self.config.verbose)
        return self.config

    def _load_sample(self) -> Sample:
        return Sample.load_csv(self.config.options['sample'], self.config.shape)

    def _emit(self, text: str, path: Optional[str] = None):
        target = self.config.output_path(path)
        if target is None:
            sys.stdout.write(text)
            return
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
        logger.info(f"Wrote {target}")

    def _emit_records(self, records: List[Dict[str, Any]], columns: Optional[List[str]] = None,
                      document: Any = None):
        if self.config.format == 'csv':
            self._emit(to_csv(records, columns))
        else:
            self._emit(dumps(records if document is None else document) + '\n')

    # Command handlers
    def el(self):
        """Evaluate log R at each point"""
        config = self._configure()
        sample = self._load_sample()
        records = []
        for text in config.options['points']:
            point = BookPoint.parse(text, sample.shape)
            if point.is_spine:
                result, breakdown = el_spine(sample, point.tangential, config.solver)
            else:
                result, breakdown = el_book(sample, point, config.solver), None
            record = {'point': str(point), 'log_ratio': result.log_ratio,
                      'statistic': result.statistic, 'status': result.status.value}
            if config.options.get('weights'):
                record['weights'] = None if result.weights is None else [float(w) for w in result.weights]
            if breakdown is not None and config.format == 'json':
                record['breakdown'] = breakdown.to_dict()
            records.append(record)
            if result.statistic == float('inf'):
                logger.warning(f"{point} is outside the convex hull of the (folded) sample")
                self.exit_code = EXIT_DEGENERATE
        if config.format == 'csv' and config.options.get('weights'):
            for record in records:
                record['weights'] = ' '.join(repr(w) for w in record['weights'] or [])
        self._emit_records(records, document={'results': records})

    def mean(self):
        """Report the sample Fréchet mean"""
        self._configure()
        report = sample_frechet_mean(self._load_sample())
        data = report.to_dict()
        data['label'] = report.label
        if self.config.format == 'csv':
            data['tangential'] = ' '.join(repr(t) for t in data['tangential'])
            data['folded_normal_means'] = ' '.join(repr(m) for m in data['folded_normal_means'])
        self._emit_records([data], document=data)

    def test(self):
        """Wilks or bootstrap EL test"""
        config = self._configure()
        sample = self._load_sample()
        point = BookPoint.parse(config.options['point'], sample.shape)
        if config.options.get('bootstrap_test'):
            report = bootstrap_test(sample, point, config.alpha, config.B, config.seed, config.solver, config.workers)
        else:
            report = wilks_test(sample, point, config.alpha, config.regime, config.solver, config.c)
        self._emit_records([report.to_dict()], document=report.to_dict())

    def cr(self):
        """Confidence set with its scan data"""
        config = self._configure()
        sample = self._load_sample()
        cset = confidence_set_spider(sample, config.alpha, spine_law=config.regime, grid_points=config.grid_points,
                                     extent=config.extent, opts=config.solver, c=config.c)
        scan_csv = to_csv(cset.scan_rows(), ['leg', 'grid_point', 'statistic'])
        scan_path = config.options.get('scan')
        if scan_path is None and config.out is not None and config.format == 'json':
            out = Path(config.out)
            scan_path = str(out.with_name(out.stem + '_scan.csv'))
        if config.format == 'csv':
            self._emit(scan_csv)
        else:
            self._emit(dumps(cset.to_dict()) + '\n')
        if scan_path is not None:
            self._emit(scan_csv, scan_path)

    def bootstrap(self):
        """Bootstrap calibration at the sample mean"""
        config = self._configure()
        calibration = bootstrap_calibrate(self._load_sample(), config.alpha, config.B, config.seed,
                                          config.solver, config.workers)
        if config.format == 'csv':
            rows = [{'rank': i + 1, 'statistic': u} for i, u in enumerate(calibration.statistics)]
            self._emit(to_csv(rows, ['rank', 'statistic']))
        else:
            self._emit(dumps(calibration.to_dict()) + '\n')

    def simulate(self):
        """Monte Carlo error rates"""
        config = self._configure()
        options = config.options
        if options.get('error_table'):
            sizes = [int(n) for n in options['n']]
            rows = error_table(config.seed, sizes=sizes, runs=int(options['runs']), B=config.B, alpha=config.alpha,
                               bootstrap=bool(options.get('bootstrap')), opts=config.solver, workers=config.workers)
            self._emit_records(rows, ERROR_TABLE_COLUMNS, document={'rows': rows})
            return

        if options.get('spec'):
            data = JsonFile(options['spec']).load()
            data.setdefault('master_seed', config.seed)
            specs = [ExperimentSpec.from_dict(data)]
        else:
            model = get_setting(options['setting'])
            null = options.get('null')
            null_point = (BookPoint.parse(null, model.shape) if null
                          else population_frechet_mean(SETTINGS['type1']).mean)
            specs = [ExperimentSpec(model=model, n=int(n), runs=int(options['runs']), null_point=null_point,
                                    master_seed=config.seed, alpha=config.alpha, B=config.B,
                                    bootstrap=bool(options.get('bootstrap')), name=options['setting'])
                     for n in options['n']]
        rows = [run_error_experiment(spec, config.solver, config.workers).to_row() for spec in specs]
        self._emit_records(rows, document={'rows': rows})

    def ingest(self):
        """Newick corpus to a spider sample"""
        config = self._configure()
        taxa = [name.strip() for item in config.options['taxa'] for name in str(item).split(',') if name.strip()]
        result = ingest_corpus(config.options['files'], taxa, config.leg_assignment, config.workers)
        report = dumps(result.skip_report()) + '\n'
        if config.options.get('report'):
            self._emit(report, config.options['report'])
        else:
            sys.stderr.write(report)
        if result.sample is None:
            raise DegenerateSampleError("No tree in the corpus contains all three taxa")
        if config.format == 'csv':
            self._emit(to_csv(result.sample.to_frame()))
        else:
            self._emit(dumps({'points': [str(p) for p in result.sample.points]}) + '\n')


def run(argv: List[str]) -> int:
    """Run obel on an argument list and return the exit code"""
    cli = ObelCLI()
    cli.define_options()
    try:
        cli.parse(argv)
    except DegenerateSampleError as e:
        logger.error(f"Degenerate sample: {e}")
        return EXIT_DEGENERATE
    except ArgumentError as e:
        logger.error(str(e))
        if e.cmd_name:
            logger.info(f"Run 'obel {e.cmd_name} --help' for usage")
        return EXIT_INPUT
    except (ValueError, OSError) as e:
        logger.error(str(e))
        return EXIT_INPUT
    except KeyboardInterrupt:
        logger.error("Operation cancelled by user")
        return EXIT_INPUT
    except Exception as e:
        logger.error(f"Internal error: {type(e).__name__}: {e}")
        return EXIT_INTERNAL
    return cli.exit_code


def main():
    """Main entry point for the obel CLI"""
    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
