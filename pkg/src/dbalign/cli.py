"""Module implements the dbalign command line front end."""
from __future__ import annotations
from typing import TYPE_CHECKING

import sys
import json
import logging
import argparse
from dataclasses import replace

import numpy as np

from dbalign.errors import DBAlignError, ParameterError, DataFormatError, NumericalError
from dbalign.config import load_settings, LOG_LEVELS, THREADS_ENV
from dbalign.model import ModelParams, Hypothesis, DatabasePair, GroundTruth, sample_h0, sample_h1, score_table, random_permutation
from dbalign.detectors import Detector, SopTestConfig, CountTestConfig, sop_statistic, sop_decide, count_statistic, count_decide, \
    detection_record
from dbalign.recovery import Algorithm, recover, evaluate_alignment
from dbalign.theory.bounds import BoundParams, BOUND_COLUMNS, BOUND_SWEEP_AXES, bound_report, bound_sweep, sop_bound_sweep, \
    tc_error_bound_at_rate
from dbalign.montecarlo.engine import ExperimentSpec, Task, SWEEP_AXES, SPEC_COLUMNS, RESULT_COLUMNS, sweep, format_cell, resolve_spec, \
    run_experiment
from dbalign.storage import atomic_write, read_database, write_database, read_truth, write_truth, write_alignment, \
    write_alignment_to, write_json_lines

try:
    from dbalign._version import __version__
except ImportError:  # source checkout without setuptools_scm metadata
    __version__ = '0.0.0+unknown'

if TYPE_CHECKING:
    from typing import Optional, List, Sequence, Dict, Any, TextIO, Iterable

    from dbalign.config import Settings

LOG: logging.Logger = logging.getLogger("dbalign.cli")

EXIT_OK: int = 0
EXIT_USAGE: int = 2
EXIT_NUMERIC: int = 3

PERMUTATION_STREAM: int = 2

DEFAULT_BETA_GRID: np.ndarray = np.round(np.linspace(0.01, 1.0, 100), 10)

DESCRIPTION = """\
Correlation detection and alignment recovery for two Gaussian databases X and Y of n rows
and d features. Under H0 the databases are independent, under H1 row i of X is correlated
with row sigma_i of Y with coefficient rho. s_ij is the normalized inner product of X_i and
Y_j, a dot is an entry s_ij >= theta.
"""


def _probability(value: str) -> float:
    number = float(value)
    if not 0.0 <= number <= 1.0:
        raise argparse.ArgumentTypeError(f'{value} is not in [0, 1]')
    return number


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f'{value} is not a positive integer')
    return number


def _seed(value: str) -> int:
    number = int(value)
    if not 0 <= number < 2**64:
        raise argparse.ArgumentTypeError(f'{value} is not a non-negative 64-bit integer')
    return number


def _grid(value: str) -> List[float]:
    try:
        return [float(item) for item in value.split(',') if item.strip() != '']
    except ValueError as err:
        raise argparse.ArgumentTypeError(f'grid must be a comma separated list of numbers: {err}') from err


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON configuration file with a top-level "dbalign" object')
    common.add_argument('--log-level', choices=list(LOG_LEVELS), help='log level, overrides the configuration')
    common.add_argument('--threads', type=_positive_int, help=f'worker threads (default: configuration, then ${THREADS_ENV}, then 1)')
    common.add_argument('--format', choices=['csv', 'json'], default='csv', help='csv rows or JSON lines with the same fields')
    common.add_argument('--output', default='-', help='output file, written atomically (default: standard output)')
    return common


def _add_model_arguments(parser: argparse.ArgumentParser, rho_required: bool = False) -> None:
    parser.add_argument('--n', type=_positive_int, required=True, help='number of rows n of each database')
    parser.add_argument('--d', type=_positive_int, required=True, help='number of features d per row')
    parser.add_argument('--rho', type=float, required=rho_required, help='correlation coefficient rho in (0, 1) of matched rows under H1')


def _add_sweep_arguments(parser: argparse.ArgumentParser, axes: Sequence[str]) -> None:
    parser.add_argument('--sweep', choices=list(axes), help='parameter to sweep')
    parser.add_argument('--grid', type=_grid, help='comma separated values of the swept parameter')
    parser.add_argument('--range', nargs=3, type=float, metavar=('START', 'STOP', 'STEPS'), help='evenly spaced values of the swept parameter')


def build_parser() -> argparse.ArgumentParser:
    """
    Builds the argument parser of all subcommands.
    """
    common = _common_parser()
    parser = argparse.ArgumentParser(prog='dbalign', description=DESCRIPTION, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND', required=True)

    generate = subparsers.add_parser('generate', parents=[common], help='draw a database pair under H0 or H1',
                                     description='Draws X and Y with i.i.d. N(0, 1) entries. Under H1 the partner of X_i is '
                                                 'rho X_i + sqrt(1 - rho^2) Z_i, stored in row sigma_i of Y.')
    _add_model_arguments(generate)
    generate.add_argument('--hypothesis', choices=['H0', 'H1'], default='H1', help='H0: independent databases, H1: correlated (default)')
    generate.add_argument('--permutation', choices=['identity', 'random'], default='identity', help='sigma under H1 (default: identity)')
    generate.add_argument('--seed', type=_seed, default=0, help='master seed')
    generate.add_argument('--x-out', required=True, help='CSV file receiving X')
    generate.add_argument('--y-out', required=True, help='CSV file receiving Y')
    generate.add_argument('--truth-out', help='file receiving the lines "i,sigma_i" (1-based), H1 only')

    detect = subparsers.add_parser('detect', parents=[common], help='decide between H0 and H1 (exit code 0 for H0, 1 for H1)',
                                   description='count: N(theta) = #{s_ij >= theta} against beta n P(d, rho, theta). '
                                               'sop: T = sum_ij X_i^T Y_j against t = sqrt(gamma) d n / 2.')
    detect.add_argument('--x', required=True, help='CSV file of X')
    detect.add_argument('--y', required=True, help='CSV file of Y')
    detect.add_argument('--detector', choices=[str(detector) for detector in Detector], default='count', help='test to run')
    detect.add_argument('--rho', type=float, help='rho the test is tuned for (needed for P unless --p-ref is given, and for sop)')
    detect.add_argument('--theta', type=float, help='dot threshold theta of the count test')
    detect.add_argument('--beta', type=_probability, help='threshold factor beta in (0, 1] of the count test')
    detect.add_argument('--p-ref', type=_probability, help='P used in beta n P instead of P(d, rho, theta)')
    detect.add_argument('--gamma', type=float, help='gamma in (0, 4 rho^2) of the sop test')

    recover_parser = subparsers.add_parser('recover', parents=[common], help='estimate the alignment of a database pair',
                                           description='tc: Threshold-and-Clean, ml: Hungarian maximization of sum_i s_i,sigma_i, '
                                                       'mp: Maximum-Path keeping the top ceil(r n) ML pairs, '
                                                       'two-stage: tc followed by ml on the residual table. '
                                                       'With --format json the pairs are JSON lines {"i", "j"}.')
    recover_parser.add_argument('--x', required=True, help='CSV file of X')
    recover_parser.add_argument('--y', required=True, help='CSV file of Y')
    recover_parser.add_argument('--algo', choices=[str(algorithm) for algorithm in Algorithm], required=True, help='estimator')
    recover_parser.add_argument('--theta', type=float, help='dot threshold theta of tc and two-stage')
    recover_parser.add_argument('--r', type=float, help='kept fraction r in (0, 1] of mp')
    recover_parser.add_argument('--truth', help='truth file "i,sigma_i"; adds the summary {size, err1, err2}')

    bounds = subparsers.add_parser('bounds', parents=[common], help='evaluate the error bounds',
                                   description='Evaluates P(d, rho, theta), Q(d, theta), the type-I and type-II bounds of the count '
                                               'test for the threshold factor beta and the Threshold-and-Clean bounds Pe1 and Pe2. '
                                               'With --detector sop the gamma trade-off of the sum-of-inner-products test is traced.')
    _add_model_arguments(bounds, rho_required=True)
    bounds.add_argument('--detector', choices=[str(detector) for detector in Detector], default='count', help='test whose bounds to evaluate')
    bounds.add_argument('--theta', type=_probability, help='dot threshold theta')
    bounds.add_argument('--beta', type=float, default=0.5, help='threshold factor beta (default 0.5)')
    bounds.add_argument('--k-max', type=_positive_int, help='truncation of the minimization over k (default: configuration, 40)')
    bounds.add_argument('--target-rate', type=float, help='tune theta to this averaged success rate R and report Pe2 there')
    _add_sweep_arguments(bounds, BOUND_SWEEP_AXES + ('gamma',))

    experiment = subparsers.add_parser('experiment', parents=[common], help='run a seeded Monte Carlo experiment or sweep',
                                       description='Estimates P_FA and P_MD of a detector or Pe1, Pe2 and the averaged success '
                                                   'rate R of a recovery algorithm. Trial t uses the random streams (seed, t, 0) '
                                                   'for H0 and (seed, t, 1) for H1.')
    _add_model_arguments(experiment, rho_required=True)
    experiment.add_argument('--task', choices=[str(task) for task in Task], default='recovery', help='experiment kind')
    experiment.add_argument('--detector', choices=[str(detector) for detector in Detector], default='count', help='detector')
    experiment.add_argument('--algo', choices=[str(algorithm) for algorithm in Algorithm], default='tc', help='recovery algorithm')
    experiment.add_argument('--theta', type=float, help='dot threshold theta')
    experiment.add_argument('--beta', type=float, help='threshold factor beta of the count test')
    experiment.add_argument('--gamma', type=float, help='gamma of the sop test')
    experiment.add_argument('--r', type=float, help='kept fraction r of mp')
    experiment.add_argument('--target-rate', type=float, help='tune theta to this averaged success rate R at every point')
    experiment.add_argument('--p-ref', type=_probability, help='P used by the count test instead of P(d, rho, theta)')
    experiment.add_argument('--trials', type=_positive_int, default=100, help='number of trials (default 100)')
    experiment.add_argument('--seed', type=_seed, default=0, help='master seed')
    _add_sweep_arguments(experiment, SWEEP_AXES)
    return parser


def _configure_logging(settings: Settings) -> None:
    logging.basicConfig(level=LOG_LEVELS[settings.log_level], format='%(asctime)s:%(levelname)s:%(name)s:%(message)s', force=True)
    logging.getLogger('dbalign.theory-numeric-debug').setLevel(LOG_LEVELS[settings.numeric_log_level])


def _resolve_settings(args: argparse.Namespace) -> Settings:
    settings = load_settings(args.config)
    overrides: Dict[str, Any] = {}
    if args.log_level is not None:
        overrides['log_level'] = args.log_level
    if args.threads is not None:
        overrides['threads'] = args.threads
    if overrides:
        settings = replace(settings, **overrides)
    return settings


def _grid_values(args: argparse.Namespace, default: Optional[Iterable[float]] = None) -> List[float]:
    if args.grid is not None and args.range is not None:
        raise ParameterError('use either --grid or --range')
    if args.grid is not None:
        return list(args.grid)
    if args.range is not None:
        start, stop, steps = args.range
        if steps < 1 or steps != int(steps):
            raise ParameterError('the number of range steps must be a positive integer')
        return [float(value) for value in np.linspace(start, stop, int(steps))]
    if default is not None:
        return [float(value) for value in default]
    raise ParameterError(f'sweeping {args.sweep} needs --grid or --range')


class _Output:
    """
    Writes rows as CSV or JSON lines to standard output or atomically to a file.
    """
    def __init__(self, path: str, output_format: str, columns: Sequence[str]) -> None:
        self.path: str = path
        self.format: str = output_format
        self.columns: Sequence[str] = columns
        self._context = None
        self.sink: Optional[TextIO] = None

    def __enter__(self) -> _Output:
        if self.path == '-':
            self.sink = sys.stdout
        else:
            self._context = atomic_write(self.path)
            self.sink = self._context.__enter__()  # pylint: disable=unnecessary-dunder-call
        if self.format == 'csv':
            self.sink.write(','.join(self.columns) + '\n')
        return self

    def write(self, row: Dict[str, Any]) -> None:
        """
        Writes one row.
        """
        if self.format == 'csv':
            self.sink.write(','.join(format_cell(row.get(column)) for column in self.columns) + '\n')
        else:
            write_json_lines(self.sink, [{column: row.get(column) for column in self.columns}])
        self.sink.flush()

    def __exit__(self, exc_type, exc_value, traceback) -> None:
        if self._context is not None:
            self._context.__exit__(exc_type, exc_value, traceback)


def _command_generate(args: argparse.Namespace, settings: Settings) -> int:  # pylint: disable=unused-argument
    if args.hypothesis == 'H1':
        sigma = random_permutation(args.n, np.random.SeedSequence(args.seed, spawn_key=(PERMUTATION_STREAM,))) \
            if args.permutation == 'random' else None
        # the databases are exactly sample_h1(params, seed), sigma comes from a separate stream
        params = ModelParams(n=args.n, d=args.d, rho=args.rho, sigma=None if sigma is None else tuple(sigma))
        db = sample_h1(params, args.seed)
    else:
        if args.truth_out is not None:
            raise ParameterError('a truth file only exists under H1')
        db = sample_h0(ModelParams(n=args.n, d=args.d), args.seed)
    write_database(args.x_out, db.x)
    write_database(args.y_out, db.y)
    if args.truth_out is not None:
        write_truth(args.truth_out, db.truth.sigma)
    LOG.info('generated %s pair with n=%d, d=%d', db.truth.hypothesis, args.n, args.d)
    return EXIT_OK


def _read_pair(args: argparse.Namespace) -> DatabasePair:
    x = read_database(args.x)
    y = read_database(args.y)
    if x.shape != y.shape:
        raise DataFormatError(f'Y has shape {y.shape[0]}x{y.shape[1]} but X has {x.shape[0]}x{x.shape[1]}', args.y)
    return DatabasePair(x=x, y=y)


def _command_detect(args: argparse.Namespace, settings: Settings) -> int:  # pylint: disable=unused-argument
    db = _read_pair(args)
    detector = Detector(args.detector)
    if detector == Detector.SOP:
        if args.gamma is None or args.rho is None:
            raise ParameterError('the sop detector needs --gamma and --rho')
        sop_config = SopTestConfig(gamma=args.gamma, rho=args.rho, n=db.n, d=db.d)
        statistic: float = sop_statistic(db)
        threshold = sop_config.threshold
        decision = sop_decide(statistic, sop_config)
    else:
        if args.theta is None or args.beta is None:
            raise ParameterError('the count detector needs --theta and --beta')
        if args.p_ref is None and args.rho is None:
            raise ParameterError('the count detector needs --rho or --p-ref')
        count_config = CountTestConfig.for_model(db.d, args.rho, args.theta, args.beta, args.p_ref)
        statistic = count_statistic(score_table(db), args.theta)
        threshold = count_config.threshold(db.n)
        decision = count_decide(statistic, db.n, count_config)
    record = detection_record(detector, statistic, threshold, decision)
    with _Output(args.output, args.format, list(record)) as output:
        output.write(record)
    return EXIT_OK if decision == Hypothesis.H0 else 1


def _command_recover(args: argparse.Namespace, settings: Settings) -> int:  # pylint: disable=unused-argument
    db = _read_pair(args)
    truth = read_truth(args.truth, db.n) if args.truth is not None else None
    if truth is not None:
        db = DatabasePair(x=db.x, y=db.y, truth=GroundTruth(hypothesis=Hypothesis.H1, sigma=truth))
    outcome = recover(score_table(db), Algorithm(args.algo), theta=args.theta, r=args.r)
    if args.format == 'json':
        records = [{'i': row + 1, 'j': column + 1} for row, column in outcome.alignment.pairs]
        if args.output == '-':
            write_json_lines(sys.stdout, records)
        else:
            with atomic_write(args.output) as sink:
                write_json_lines(sink, records)
    elif args.output == '-':
        write_alignment_to(sys.stdout, outcome.alignment)
    else:
        write_alignment(args.output, outcome.alignment)
    if truth is not None:
        evaluation = evaluate_alignment(outcome.alignment, truth)
        summary = {'size': evaluation.size, 'err1': evaluation.err1, 'err2': evaluation.err2}
        sys.stdout.write(json.dumps(summary) + '\n')
    LOG.info('%s recovered %d of %d pairs', args.algo, outcome.alignment.size, db.n)
    return EXIT_OK


def _command_bounds(args: argparse.Namespace, settings: Settings) -> int:
    k_max = args.k_max if args.k_max is not None else settings.k_max
    rel_tol = settings.quad_rel_tol
    if args.detector == str(Detector.SOP) or args.sweep == 'gamma':
        grid = _grid_values(args, np.linspace(4.0 * args.rho ** 2 / 200.0, 4.0 * args.rho ** 2 * (1.0 - 1.0 / 200.0), 199))
        with _Output(args.output, args.format, ('n', 'd', 'rho', 'gamma', 't', 'fa_bound', 'md_bound')) as output:
            for row in sop_bound_sweep(args.n, args.d, args.rho, grid):
                output.write(row)
        return EXIT_OK
    if args.target_rate is not None:
        theta, bound = tc_error_bound_at_rate(args.n, args.d, args.rho, args.target_rate, rel_tol=rel_tol)
        with _Output(args.output, args.format, ('n', 'd', 'rho', 'target_rate', 'theta', 'pe2_up')) as output:
            output.write({'n': args.n, 'd': args.d, 'rho': args.rho, 'target_rate': args.target_rate, 'theta': theta, 'pe2_up': bound})
        return EXIT_OK
    grid = _grid_values(args, DEFAULT_BETA_GRID if args.sweep == 'beta' else None) if args.sweep is not None else []
    theta = args.theta
    if theta is None and args.sweep == 'theta' and grid:
        theta = grid[0]
    if theta is None:
        raise ParameterError('bounds need --theta (or --target-rate)')
    base = BoundParams(n=args.n, d=args.d, rho=args.rho, theta=theta, test_beta=args.beta, k_max=k_max)
    if args.sweep is None:
        reports = [bound_report(base.n, base.d, base.rho, base.theta, base.test_beta, base.k_max, rel_tol)]
    else:
        reports = bound_sweep(base, args.sweep, grid, rel_tol)
    with _Output(args.output, args.format, BOUND_COLUMNS) as output:
        for report in reports:
            output.write(report.as_row())
    return EXIT_OK


def _command_experiment(args: argparse.Namespace, settings: Settings) -> int:
    grid = _grid_values(args) if args.sweep is not None else []
    swept: Dict[str, Any] = {'theta': args.theta, 'test_beta': args.beta, 'r': args.r}
    field_name = 'test_beta' if args.sweep == 'beta' else args.sweep
    # the swept value replaces the base value at every point
    if field_name in swept and swept[field_name] is None and grid:
        swept[field_name] = grid[0]
    spec = ExperimentSpec(params=ModelParams(n=args.n, d=args.d, rho=args.rho), task=Task(args.task), detector=Detector(args.detector),
                          algorithm=Algorithm(args.algo), gamma=args.gamma, trials=args.trials, seed=args.seed, threads=settings.threads,
                          p_ref=args.p_ref, confidence=settings.confidence, target_rate=args.target_rate, **swept)
    columns = SPEC_COLUMNS + RESULT_COLUMNS
    if args.sweep is None:
        resolved = resolve_spec(spec)
        result = run_experiment(resolved)
        with _Output(args.output, args.format, columns) as output:
            output.write({**resolved.as_row(), **result.as_row()})
        return EXIT_OK
    if args.format == 'csv':
        if args.output == '-':
            sweep(spec, args.sweep, grid, sys.stdout)
        else:
            with atomic_write(args.output) as sink:
                sweep(spec, args.sweep, grid, sink)
        return EXIT_OK
    with _Output(args.output, args.format, columns) as output:
        for point, result in sweep(spec, args.sweep, grid):
            output.write({**point.as_row(), **result.as_row()})
    return EXIT_OK


COMMANDS = {
    'generate': _command_generate,
    'detect': _command_detect,
    'recover': _command_recover,
    'bounds': _command_bounds,
    'experiment': _command_experiment,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Runs the command line with the given arguments.

    Args:
        argv (Optional[Sequence[str]]): Arguments without the program name; sys.argv[1:] if None.

    Returns:
        int: 0 on success (and for an H0 decision of detect), 1 for an H1 decision of detect,
            2 on usage, parameter or input errors, 3 when a numerical routine fails.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else EXIT_OK
    try:
        settings = _resolve_settings(args)
        _configure_logging(settings)
        LOG.info('dbalign %s running %s', __version__, args.command)
        return COMMANDS[args.command](args, settings)
    except NumericalError as err:
        sys.stderr.write(f'dbalign: numerical failure: {err}\n')
        return EXIT_NUMERIC
    except (ParameterError, DataFormatError, OSError) as err:
        sys.stderr.write(f'dbalign: {err}\n')
        return EXIT_USAGE
    except DBAlignError as err:
        sys.stderr.write(f'dbalign: {err}\n')
        return EXIT_USAGE


def main() -> None:
    """
    Console entry point.
    """
    sys.exit(run())


if __name__ == '__main__':
    main()
