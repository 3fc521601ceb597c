"""
Module implements the seeded Monte Carlo engine for detection and recovery experiments.

Trial t draws its H0 databases from the stream (seed, t, 0) and its H1 databases from
(seed, t, 1), see dbalign.model.make_rng. Trials are independent and their results are
merged in trial order, so every estimate is a function of the experiment alone and not of
the number of worker threads.
"""
from __future__ import annotations
from typing import TYPE_CHECKING

import csv
import time
import math
import logging
from enum import Enum
from dataclasses import dataclass, replace
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import stats

from dbalign.errors import ParameterError
from dbalign.model import ModelParams, Hypothesis, sample_h0, sample_h1, score_table, make_rng
from dbalign.detectors import Detector, SopTestConfig, CountTestConfig, sop_statistic, sop_decide, count_statistic, count_decide
from dbalign.recovery import Algorithm, recover, evaluate_alignment
from dbalign.theory.bounds import tune_theta

if TYPE_CHECKING:
    from typing import Optional, Tuple, List, Dict, Any, Sequence, Callable, TextIO, TypeVar

    from dbalign.model import DatabasePair

    T = TypeVar("T")

LOG: logging.Logger = logging.getLogger("dbalign.montecarlo")

SWEEP_AXES: Tuple[str, ...] = ('theta', 'rho', 'beta', 'r', 'n', 'd')

SPEC_COLUMNS: Tuple[str, ...] = ('task', 'n', 'd', 'rho', 'detector', 'algorithm', 'theta', 'beta', 'gamma', 'r', 'trials', 'seed')
RESULT_COLUMNS: Tuple[str, ...] = ('p_fa_hat', 'p_fa_up', 'p_md_hat', 'p_md_up', 'pe1_hat', 'pe1_up', 'pe2_hat', 'pe2_up', 'r_bar',
                                   'wall_clock')

H0_STREAM: int = 0
H1_STREAM: int = 1

# doubles held per array while simulating pairs
_DOT_RATE_CHUNK_CELLS: int = 4_000_000


class Task(Enum):
    """
    Kind of experiment.

    Attributes:
        DETECTION: Estimate the false-alarm and missed-detection probabilities of a detector.
        RECOVERY: Estimate the alignment errors and the success rate of a recovery algorithm.
    """
    DETECTION = 'detection'
    RECOVERY = 'recovery'

    def __str__(self) -> str:
        return self.value


def clopper_pearson_upper(successes: int, trials: int, confidence: float = 0.95) -> float:
    """
    One-sided exact binomial upper confidence limit.

    Args:
        successes (int): Number of observed events.
        trials (int): Number of trials, at least 1.
        confidence (float): Confidence level in (0, 1).

    Returns:
        float: The upper limit; 1 when every trial was an event.
    """
    if trials < 1 or not 0 <= successes <= trials:
        raise ParameterError(f'need 0 <= successes <= trials and trials >= 1, got {successes} of {trials}')
    if not 0.0 < confidence < 1.0:
        raise ParameterError(f'confidence must be in (0, 1), got {confidence}')
    if successes == trials:
        return 1.0
    return float(stats.beta.ppf(confidence, successes + 1, trials - successes))


@dataclass(frozen=True)
class BinomialEstimate:
    """
    Number of events among a number of independent trials.
    """
    successes: int
    trials: int
    confidence: float = 0.95

    @property
    def rate(self) -> float:
        """
        The point estimate successes / trials.
        """
        return self.successes / self.trials

    @property
    def sigma(self) -> float:
        """
        Binomial standard deviation of the point estimate.
        """
        return math.sqrt(self.rate * (1.0 - self.rate) / self.trials)

    @property
    def upper(self) -> float:
        """
        Clopper-Pearson upper limit at the configured confidence.
        """
        return clopper_pearson_upper(self.successes, self.trials, self.confidence)


@dataclass(frozen=True)
class ExperimentSpec:
    """
    A Monte Carlo experiment.

    Attributes:
        params (ModelParams): n, d and rho of the databases; sigma is ignored, trials use the identity.
        task (Task): Detection or recovery.
        detector (Detector): Detector of a detection experiment.
        algorithm (Algorithm): Estimator of a recovery experiment.
        theta (Optional[float]): Dot threshold of the count test, TC and the two-stage algorithm.
        test_beta (Optional[float]): Threshold factor of the count test.
        gamma (Optional[float]): Threshold parameter of the sum-of-inner-products test.
        r (Optional[float]): Kept fraction of Maximum-Path.
        trials (int): Number of trials, at least 1.
        seed (int): Master seed.
        threads (int): Worker threads; does not change any estimate.
        p_ref (Optional[float]): P used by the count test instead of P(d, rho, theta).
        target_rate (Optional[float]): Success rate theta is tuned to when theta is not given (TC and two-stage).
        confidence (float): Confidence level of the reported upper limits.
    """
    params: ModelParams
    task: Task = Task.RECOVERY
    detector: Detector = Detector.COUNT
    algorithm: Algorithm = Algorithm.TC
    theta: Optional[float] = None
    test_beta: Optional[float] = None
    gamma: Optional[float] = None
    r: Optional[float] = None
    trials: int = 100
    seed: int = 0
    threads: int = 1
    p_ref: Optional[float] = None
    confidence: float = 0.95
    target_rate: Optional[float] = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ParameterError('trials must be at least 1')
        if self.threads < 1:
            raise ParameterError('threads must be at least 1')
        if not 0 <= self.seed < 2**64:
            raise ParameterError(f'seed must be a non-negative 64-bit integer, got {self.seed}')
        if self.params.rho is None:
            raise ParameterError('experiments need rho')
        if self.task == Task.DETECTION:
            if self.detector == Detector.COUNT and (self.theta is None or self.test_beta is None):
                raise ParameterError('the count detector needs theta and test_beta')
            if self.detector == Detector.SOP and self.gamma is None:
                raise ParameterError('the sum-of-inner-products detector needs gamma')
        else:
            if self.algorithm in (Algorithm.TC, Algorithm.TWO_STAGE) and self.theta is None and self.target_rate is None:
                raise ParameterError(f'{self.algorithm} recovery needs theta or a target success rate')
            if self.algorithm == Algorithm.MP and self.r is None:
                raise ParameterError('mp recovery needs r')

    def as_row(self) -> Dict[str, Any]:
        """
        Returns the experiment keyed by the sweep CSV spec columns.
        """
        return {'task': str(self.task), 'n': self.params.n, 'd': self.params.d, 'rho': self.params.rho,
                'detector': str(self.detector) if self.task == Task.DETECTION else None,
                'algorithm': str(self.algorithm) if self.task == Task.RECOVERY else None,
                'theta': self.theta, 'beta': self.test_beta, 'gamma': self.gamma, 'r': self.r, 'trials': self.trials, 'seed': self.seed}


@dataclass(frozen=True)
class ExperimentResult:
    """
    Estimates of one experiment. Rates a task does not measure are None.

    Attributes:
        p_fa (Optional[BinomialEstimate]): False alarms among the H0 trials.
        p_md (Optional[BinomialEstimate]): Missed detections among the H1 trials.
        pe1 (Optional[BinomialEstimate]): Trials whose output is not the full true permutation.
        pe2 (Optional[BinomialEstimate]): Trials with at least one wrong pair.
        r_bar (Optional[float]): Averaged success rate E[|output|] / n.
        wall_clock (float): Seconds spent on the trials.
    """
    trials: int
    p_fa: Optional[BinomialEstimate] = None
    p_md: Optional[BinomialEstimate] = None
    pe1: Optional[BinomialEstimate] = None
    pe2: Optional[BinomialEstimate] = None
    r_bar: Optional[float] = None
    wall_clock: float = 0.0

    def as_row(self) -> Dict[str, Any]:
        """
        Returns the estimates keyed by the sweep CSV result columns.
        """
        row: Dict[str, Any] = {}
        for name in ('p_fa', 'p_md', 'pe1', 'pe2'):
            estimate: Optional[BinomialEstimate] = getattr(self, name)
            row[f'{name}_hat'] = estimate.rate if estimate is not None else None
            row[f'{name}_up'] = estimate.upper if estimate is not None else None
        row['r_bar'] = self.r_bar
        row['wall_clock'] = self.wall_clock
        return row


def _run_trials(function: Callable[[int], T], trials: int, threads: int) -> List[T]:
    if threads == 1:
        return [function(trial) for trial in range(trials)]
    with ThreadPoolExecutor(max_workers=threads, thread_name_prefix='dbalign-trial') as executor:
        # map yields in submission order
        return list(executor.map(function, range(trials)))


def _trial_seed(seed: int, trial: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(trial, stream))


def _decision_rule(spec: ExperimentSpec, params: ModelParams) -> Callable[[DatabasePair], Hypothesis]:
    if spec.detector == Detector.SOP:
        sop_config = SopTestConfig(gamma=spec.gamma, rho=params.rho, n=params.n, d=params.d)
        return lambda db: sop_decide(sop_statistic(db), sop_config)
    count_config = CountTestConfig.for_model(params.d, params.rho, spec.theta, spec.test_beta, spec.p_ref)
    return lambda db: count_decide(count_statistic(score_table(db), spec.theta), params.n, count_config)


def estimate_detection(spec: ExperimentSpec) -> ExperimentResult:
    """
    Estimates the type-I and type-II error probabilities of a detector.

    Every trial draws one H0 pair and one H1 pair with the identity permutation.

    Args:
        spec (ExperimentSpec): A detection experiment.

    Returns:
        ExperimentResult: p_fa and p_md.
    """
    if spec.task != Task.DETECTION:
        raise ParameterError('estimate_detection needs a detection experiment')
    params = replace(spec.params, sigma=None)
    decide: Callable[[DatabasePair], Hypothesis] = _decision_rule(spec, params)

    def trial(index: int) -> Tuple[bool, bool]:
        false_alarm = decide(sample_h0(params, _trial_seed(spec.seed, index, H0_STREAM))) == Hypothesis.H1
        missed = decide(sample_h1(params, _trial_seed(spec.seed, index, H1_STREAM))) == Hypothesis.H0
        return false_alarm, missed

    start = time.perf_counter()
    outcomes = _run_trials(trial, spec.trials, spec.threads)
    elapsed = time.perf_counter() - start
    false_alarms = sum(1 for false_alarm, _ in outcomes if false_alarm)
    missed = sum(1 for _, miss in outcomes if miss)
    LOG.info('detection with %s: %d false alarms and %d missed detections in %d trials (%.3fs)', spec.detector, false_alarms, missed,
             spec.trials, elapsed)
    return ExperimentResult(trials=spec.trials, p_fa=BinomialEstimate(false_alarms, spec.trials, spec.confidence),
                            p_md=BinomialEstimate(missed, spec.trials, spec.confidence), wall_clock=elapsed)


def estimate_recovery(spec: ExperimentSpec) -> ExperimentResult:
    """
    Estimates the alignment error probabilities and the averaged success rate of a recovery algorithm.

    Args:
        spec (ExperimentSpec): A recovery experiment.

    Returns:
        ExperimentResult: pe1, pe2 and r_bar.
    """
    if spec.task != Task.RECOVERY:
        raise ParameterError('estimate_recovery needs a recovery experiment')
    spec = resolve_spec(spec)
    params = replace(spec.params, sigma=None)

    def trial(index: int) -> Tuple[bool, bool, int]:
        db = sample_h1(params, _trial_seed(spec.seed, index, H1_STREAM))
        outcome = recover(score_table(db), spec.algorithm, theta=spec.theta, r=spec.r)
        return tuple(evaluate_alignment(outcome.alignment, db.truth.sigma))

    start = time.perf_counter()
    outcomes = _run_trials(trial, spec.trials, spec.threads)
    elapsed = time.perf_counter() - start
    err1 = sum(1 for outcome in outcomes if outcome[0])
    err2 = sum(1 for outcome in outcomes if outcome[1])
    r_bar = sum(outcome[2] for outcome in outcomes) / (spec.trials * params.n)
    LOG.info('recovery with %s: pe1=%d/%d, pe2=%d/%d, r_bar=%.6g (%.3fs)', spec.algorithm, err1, spec.trials, err2, spec.trials, r_bar,
             elapsed)
    return ExperimentResult(trials=spec.trials, pe1=BinomialEstimate(err1, spec.trials, spec.confidence),
                            pe2=BinomialEstimate(err2, spec.trials, spec.confidence), r_bar=r_bar, wall_clock=elapsed)


def resolve_spec(spec: ExperimentSpec) -> ExperimentSpec:
    """
    Fills in theta from the target success rate, see dbalign.theory.bounds.tune_theta.
    """
    if spec.theta is not None or spec.target_rate is None:
        return spec
    theta = tune_theta(spec.params.n, spec.params.d, spec.params.rho, spec.target_rate)
    return replace(spec, theta=theta)


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """
    Runs a detection or a recovery experiment.
    """
    if spec.task == Task.DETECTION:
        return estimate_detection(spec)
    return estimate_recovery(spec)


def _with_axis(spec: ExperimentSpec, axis: str, value: float) -> ExperimentSpec:
    if axis == 'rho':
        return replace(spec, params=replace(spec.params, rho=float(value)))
    if axis in ('n', 'd'):
        return replace(spec, params=replace(spec.params, sigma=None, **{axis: int(value)}))
    if axis == 'beta':
        return replace(spec, test_beta=float(value))
    return replace(spec, **{axis: float(value)})


def format_cell(value: Any) -> str:
    """
    Formats a CSV cell: floats with 6 significant digits, None as an empty cell.
    """
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f'{float(value):.6g}'
    return str(value)


def sweep(spec: ExperimentSpec, axis: str, grid: Sequence[float], sink: Optional[TextIO] = None) -> List[Tuple[ExperimentSpec, ExperimentResult]]:
    """
    Runs one experiment per grid value of a parameter and streams the rows as CSV.

    The header holds the spec columns followed by the result columns and is written even
    for an empty grid. Every row is flushed as soon as its experiment is done.

    Args:
        spec (ExperimentSpec): The base experiment.
        axis (str): One of theta, rho, beta, r, n, d.
        grid (Sequence[float]): Values of the swept parameter, in output order.
        sink (Optional[TextIO]): Text stream receiving the CSV.

    Returns:
        List[Tuple[ExperimentSpec, ExperimentResult]]: The experiments and their results in grid order.

    Raises:
        ParameterError: If the axis is unknown.
    """
    if axis not in SWEEP_AXES:
        raise ParameterError(f'unknown sweep axis {axis!r}, expected one of {", ".join(SWEEP_AXES)}')
    writer = csv.writer(sink, lineterminator='\n') if sink is not None else None
    if writer is not None:
        writer.writerow(SPEC_COLUMNS + RESULT_COLUMNS)
    results: List[Tuple[ExperimentSpec, ExperimentResult]] = []
    for value in grid:
        point = resolve_spec(_with_axis(spec, axis, value))
        LOG.info('sweep %s=%s', axis, value)
        result = run_experiment(point)
        results.append((point, result))
        if writer is not None:
            row = {**point.as_row(), **result.as_row()}
            writer.writerow([format_cell(row[column]) for column in SPEC_COLUMNS + RESULT_COLUMNS])
            sink.flush()
    return results


def estimate_dot_rate(d: int, theta: float, trials: int, seed: int, rho: Optional[float] = None) -> BinomialEstimate:
    """
    Estimates the probability that a normalized pair crosses theta by simulation.

    Without rho the pair is independent and the rate estimates Q(d, theta); with rho it is
    correlated as a matched pair under H1 and the rate estimates P(d, rho, theta). Pairs are
    drawn in chunks from the stream (seed,).

    Args:
        d (int): Number of features.
        theta (float): Threshold.
        trials (int): Number of pairs.
        seed (int): Seed of the draw.
        rho (Optional[float]): Correlation of the pair, None for independent pairs.

    Returns:
        BinomialEstimate: Number of crossing pairs among the trials.
    """
    if trials < 1:
        raise ParameterError('trials must be at least 1')
    if d < 1:
        raise ParameterError('d must be at least 1')
    if rho is not None and not 0.0 < rho < 1.0:
        raise ParameterError(f'rho must be in (0, 1), got {rho}')
    rng = make_rng(seed)
    crossings = 0
    remaining = trials
    while remaining > 0:
        size = min(remaining, max(1, _DOT_RATE_CHUNK_CELLS // d))
        x = rng.standard_normal((size, d))
        z = rng.standard_normal((size, d))
        y = z if rho is None else rho * x + math.sqrt(1.0 - rho ** 2) * z
        cosines = np.einsum('ij,ij->i', x, y) / (np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1))
        crossings += int(np.count_nonzero(cosines >= theta))
        remaining -= size
    return BinomialEstimate(successes=crossings, trials=trials)

